import numpy as np
import pytest
from sklearn.base import clone

from dscnet import ConvAutoEncoder, DeepSubspaceClustering, SynthSpec, clustering_error, synth_subspaces
from dscnet.exceptions import ConfigError
from dscnet.model import forward


@pytest.fixture(scope="module")
def blobs():
    data = synth_subspaces(SynthSpec(3, 36, 3, 20, image=True, seed=0))
    return data.X, data.labels


def test_get_params_and_clone():
    est = DeepSubspaceClustering(n_clusters=4, kernels=(5, 3), channels=(4, 8), lambda2=30.0)
    params = est.get_params()
    assert params["n_clusters"] == 4 and params["lambda2"] == 30.0
    twin = clone(est)
    assert twin.get_params() == params
    assert twin is not est
    twin.set_params(alpha=2.0)
    assert twin.alpha == 2.0 and est.alpha == 1.0


def test_fit_predict(blobs):
    X, y = blobs
    est = DeepSubspaceClustering(
        n_clusters=3, channels=(5,), pretrain_epochs=300, finetune_epochs=100, subspace_dim=4, random_state=0
    )
    labels = est.fit_predict(X)
    assert labels.shape == (60,)
    assert est.coef_.shape == (60, 60)
    assert est.affinity_matrix_.shape == (60, 60)
    assert est.latent_.shape[0] == 60
    assert len(est.finetune_log_) == 100
    assert clustering_error(labels, y) == 0.0
    again = clone(est).fit(X)
    assert np.array_equal(again.labels_, labels)
    assert again.coef_.tobytes() == est.coef_.tobytes()


def test_fit_with_pretrained_and_flat_input(blobs):
    X, _ = blobs
    ae = ConvAutoEncoder(channels=(4,), epochs=10).fit(X)
    est = DeepSubspaceClustering(
        n_clusters=3, channels=(4,), finetune_epochs=5, affinity="plain", image_shape=(6, 6)
    )
    est.fit(X.reshape(60, -1), pretrained_params=ae.params_)
    assert est.pretrain_log_ is None
    assert set(est.labels_) <= {0, 1, 2}


def test_fit_validation(blobs):
    X, _ = blobs
    with pytest.raises(ConfigError):
        DeepSubspaceClustering(n_clusters=1).fit(X)
    with pytest.raises(ValueError):
        DeepSubspaceClustering(n_clusters=2).fit(X * 2)
    with pytest.raises(ConfigError):
        DeepSubspaceClustering(n_clusters=2, affinity="knn", pretrain_epochs=1, finetune_epochs=1).fit(X)


def test_autoencoder_round_trip(blobs):
    X, _ = blobs
    ae = ConvAutoEncoder(kernels=(3, 3), channels=(3, 4), epochs=5).fit(X)
    Z = ae.transform(X)
    assert Z.shape == (60, ae.config_.latent_dim)
    recon = ae.inverse_transform(Z)
    expected = forward(ae.config_, ae.params_, X, self_expressive=False).X_hat
    np.testing.assert_allclose(recon, expected, atol=1e-13)
    np.testing.assert_array_equal(ae.transform(X.reshape(60, -1)), Z)
