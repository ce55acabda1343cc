import json

import pytest
from hypothesis import given, strategies as st

from beamstat.errors import BadDimension, BadFineFactor, TooManyUsersPerRoot
from beamstat.sysmodel import FULL_SCALE_CONFIG, SystemConfig, derive_dims, load_config, validate


class TestDeriveDims:
    def test_full_scale_numerology(self):
        d = derive_dims(FULL_SCALE_CONFIG)
        assert d.M_f == 9
        assert d.users_per_root_cap == 13

    def test_no_oversampling(self):
        cfg = SystemConfig(M_rz=2, M_rx=2, M_p=4, M_c=64, M_g=8, N_az=1, N_ax=1, N_ap=1,
                           P_per_root=(1,))
        d = derive_dims(cfg)
        assert (d.N_z, d.N_x, d.N_r, d.N_p) == (2, 2, 4, 4)

    def test_desk_default(self):
        d = validate(SystemConfig())
        assert (d.M_r, d.N_r, d.N_p, d.N_f, d.K) == (16, 64, 48, 4, 12)

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(4, 64))
    def test_pure_and_ratio(self, mz, mx, nap, mp):
        cfg = SystemConfig(M_rz=mz, M_rx=mx, N_ap=nap, M_p=mp, M_c=512, M_g=32, P_per_root=(1,))
        a, b = derive_dims(cfg), derive_dims(cfg)
        assert a == b
        assert a.N_f * mp == a.M_f * a.N_p
        assert a.N_f <= a.N_p and a.M_f <= mp


class TestValidate:
    def test_cap_exceeded(self):
        with pytest.raises(TooManyUsersPerRoot):
            validate(FULL_SCALE_CONFIG.replace(P_per_root=(14,)))

    def test_full_scale_allocation_ok(self):
        assert validate(FULL_SCALE_CONFIG.replace(P_per_root=(12,))).K == 12

    def test_cap_boundary(self):
        assert validate(FULL_SCALE_CONFIG.replace(P_per_root=(13,))).K == 13

    @pytest.mark.parametrize("value", [0, -1, 1.5, True])
    def test_bad_fine_factor(self, value):
        with pytest.raises(BadFineFactor):
            validate(SystemConfig(N_ap=value))

    @pytest.mark.parametrize("field,value", [("M_rz", 0), ("T", 0), ("Q", 0), ("M_p", 600),
                                             ("M_g", 512), ("sigma_z2", -1.0), ("delta_f", 0.0)])
    def test_bad_dimension(self, field, value):
        with pytest.raises(BadDimension):
            validate(SystemConfig(**{field: value}))

    def test_allocation_length(self):
        with pytest.raises(BadDimension):
            validate(SystemConfig(Q=2, P_per_root=(12,)))


class TestConfigFile:
    def test_roundtrip_and_override(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(SystemConfig(M_p=48).to_dict()))
        cfg = load_config(path, seed=7)
        assert cfg.M_p == 48 and cfg.seed == 7
        assert cfg.P_per_root == (12,)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"M_p": 24, "bogus": 1}))
        with pytest.raises(KeyError):
            load_config(path)

    def test_sampling_interval(self):
        cfg = SystemConfig()
        assert cfg.T_s == pytest.approx(1 / (cfg.M_c * cfg.delta_f))
