import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from geoni import GeoNI
from geoni.lightfield import LightField4D, LightFieldSlice
from geoni.networks import DibrNetworkSpec, NiNetworkSpec, build_dibr_network, build_ni_network
from geoni.synthetic import constant_disparity_lightfield, constant_disparity_scene


def _small(**kw):
    params = dict(alpha=4, hypotheses=(-4.0, 0.0, 4.0), base_channels=1, batch_size=4, epochs=1,
                  patch_width=16, patch_height=4, seed=0)
    params.update(kw)
    return GeoNI(**params)


def test_params_round_trip():
    est = _small()
    params = est.get_params()
    assert params["alpha"] == 4 and params["hypotheses"] == (-4.0, 0.0, 4.0)
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(cascade=2)
    assert est.cascade == 2


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        _small().predict(np.zeros((8, 2, 2, 1)))


def test_fit_predict_slice_and_4d():
    lf = constant_disparity_lightfield(16, 8, 5, 5, 1.0, seed=2)
    est = _small().fit([lf])
    assert len(est.history_) == 1
    sparse, dense = constant_disparity_scene(16, 4, 3, 4, 4.0)
    out = est.predict(sparse)
    assert isinstance(out, LightFieldSlice) and out.views == 9
    assert np.array_equal(est.transform(sparse).data, out.data)
    assert est.predict(sparse.data).views == 9
    lf_small = LightField4D(lf.data[:, :, :2, :2])
    assert est.predict(lf_small).shape == (16, 8, 5, 5, 1)
    assert est.render_depth(sparse).shape == (16, 4, 9)
    assert np.isfinite(est.score(sparse, dense))


def test_set_networks_checks_alpha():
    ni = build_ni_network(NiNetworkSpec(alpha=7, base_channels=1))
    dibr = build_dibr_network(DibrNetworkSpec(base_channels=1))
    with pytest.raises(ValueError, match="alpha"):
        _small().set_networks(ni, dibr)
    est = _small(alpha=7, cascade=2).set_networks(ni, dibr)
    sl = LightFieldSlice(np.random.default_rng(0).random((16, 2, 2, 1)).astype(np.float32))
    assert est.predict(sl).views == 50


def test_invalid_settings_rejected_at_use():
    est = _small(hypotheses=(1.0, 2.0))
    with pytest.raises(ValueError):
        est.fit([constant_disparity_lightfield(16, 8, 5, 1, 1.0)])
    with pytest.raises(ValueError):
        _small().fit([])
