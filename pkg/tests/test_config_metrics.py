import numpy as np
import pytest

from localfilter import fem
from localfilter.config import RunConfig, from_ini, load_config, save_config, to_ini
from localfilter.decomposition import partition
from localfilter.errors import ConfigError, NumericalError
from localfilter.mesh import build_mesh
from localfilter.metrics import (estimation_error, estimation_error_fields, spatial_error,
                                 spatial_norm, stitch)
from localfilter.scenarios import experiment_config


class TestConfig:
    @pytest.mark.parametrize("which", [1, 2])
    def test_round_trip(self, which, tmp_path):
        cfg = experiment_config(which).with_(seed=9, workers=2, mass_weighted=True)
        if which == 2:
            cfg = cfg.with_(pseudo_r=0.5)
        save_config(cfg, tmp_path / "c.ini")
        back = load_config(tmp_path / "c.ini")
        assert back == cfg

    def test_auto_gamma_round_trip(self):
        cfg = RunConfig(gamma=None)
        assert "gamma = auto" in to_ini(cfg)
        assert from_ini(to_ini(cfg)).gamma is None

    @pytest.mark.parametrize("kw", [dict(mode="kalman"), dict(h=0.0), dict(h=float("nan")),
                                    dict(steps=0), dict(schwarz_tol=0.0),
                                    dict(schwarz_max_iter=0), dict(reinit_window=-1.0),
                                    dict(reinit_window=0.15), dict(workers=0), dict(eps=-1e-3),
                                    dict(flux="upwind"), dict(observed=(1,)),
                                    dict(pseudo_r=-1.0)])
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    @pytest.mark.parametrize("text", ["[run\nsteps=3", "[run]\nsteps = many",
                                      "[geometry]\nrect = 0, 1", "[run]\nmass_weighted = maybe"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            from_ini(text)

    def test_partial_file_uses_defaults(self):
        cfg = from_ini("[run]\nsteps = 4\n")
        assert cfg.steps == 4 and cfg.h == RunConfig().h

    def test_derived_quantities(self):
        c = experiment_config(2)
        assert c.horizon == pytest.approx(200.0)
        assert c.subdomain_area == pytest.approx(1.0)


class TestMetrics:
    def test_stitch_averages_shared_copies(self):
        top = partition((0, 0, 2, 1), 2, 1, (2, 2))
        fields = [np.zeros(9), np.ones(9)]
        g = stitch(top, fields)
        shared = top.subdomains[0].global_nodes[top.interfaces[0].nodes_i]
        assert np.allclose(g[shared], 0.5)
        assert g.size == 15 and g.sum() == pytest.approx(6 * 1 + 3 * 0.5)

    def test_norms(self):
        u = np.array([3.0, 4.0])
        assert spatial_norm(u) == 5.0
        assert spatial_norm(u, 2 * np.eye(2)) == pytest.approx(np.sqrt(50))
        assert spatial_error(np.zeros(2), u) == 1.0
        with pytest.raises(NumericalError):
            spatial_error(u, np.zeros(2))

    def test_mass_norm_of_constant_is_sqrt_area(self):
        m = fem.assemble_mass(build_mesh(4, 3, (0, 0, 2, 3)))
        assert spatial_norm(np.ones(20), m) == pytest.approx(np.sqrt(6.0))

    def test_estimation_error_trapezoid(self):
        # hand computed: trapezoid of [1, 2, 3] over [4, 4, 4]
        assert estimation_error([1, 2, 3], [4, 4, 4], 0.1) == pytest.approx(0.5)
        assert estimation_error([1, 1, 1, 1], [2, 2, 2, 2], 0.3) == pytest.approx(0.5)
        assert estimation_error([0, 2], [1, 1], 1.0) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            estimation_error([1.0], [1.0], 0.1)
        with pytest.raises(NumericalError):
            estimation_error([1, 1], [0, 0], 0.1)

    def test_fields(self):
        truths = [np.ones(3), 2 * np.ones(3)]
        ests = [np.zeros(3), 2 * np.ones(3)]
        assert estimation_error_fields(ests, truths, 0.1) == pytest.approx(1 / 3)
