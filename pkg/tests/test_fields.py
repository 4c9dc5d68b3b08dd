import numpy as np
import pytest

from szbov import (
    FieldConfig,
    FieldConfigError,
    config_from_dict,
    config_to_dict,
    electric_preset,
    magnetic_preset,
    preset,
    validate,
)


class TestPresets:
    def test_zero_preset_is_autonomous(self):
        cfg = preset("zero", mu=0.3)
        assert cfg.mu == 0.3
        assert cfg.autonomous

    def test_constant_magnetic_field_value(self):
        cfg = preset("constant", mu=0.5, b=2.0)
        q = np.array([0.3 + 0.1j, -1.5 + 0j])
        np.testing.assert_allclose(cfg.magnetic.field_at(q), 2.0)

    def test_oscillating_field_breaks_autonomy(self):
        cfg = preset("uniform_oscillating", mu=0.5, epsilon=0.1)
        assert not cfg.autonomous

    def test_oscillating_field_is_time_periodic(self):
        ele = electric_preset("uniform_oscillating", epsilon=0.1)
        q = np.array([0.5 + 0.2j])
        for t in (0.0, 0.31, 0.77):
            np.testing.assert_allclose(
                ele.e(np.array([t]), q), ele.e(np.array([t + 1.0]), q), rtol=1e-12
            )

    def test_rotating_charge_is_time_periodic(self):
        ele = electric_preset("rotating_charge", mu_s=0.01, r_s=3.0, k=2)
        q = np.array([0.5 + 0.2j])
        np.testing.assert_allclose(
            ele.e(np.array([0.2]), q), ele.e(np.array([1.2]), q), rtol=1e-12
        )

    def test_unknown_parameters_rejected(self):
        with pytest.raises(FieldConfigError):
            magnetic_preset("constant", b=1.0, frequency=3.0)
        with pytest.raises(FieldConfigError):
            electric_preset("uniform_oscillating", eps=0.1)
        with pytest.raises(FieldConfigError):
            preset("nonsense")

    def test_mass_ratio_bounds(self):
        with pytest.raises((FieldConfigError, ValueError)):
            FieldConfig(
                mu=-0.1,
                magnetic=magnetic_preset("zero"),
                electric=electric_preset("zero"),
            )


class TestValidation:
    @pytest.mark.parametrize(
        "cfg",
        [
            preset("zero", mu=0.5),
            preset("constant", mu=0.5, b=2.0),
            preset("uniform_oscillating", mu=0.5, epsilon=0.1),
            preset("rotating_charge", mu=0.5, mu_s=0.01, r_s=3.0, k=1),
        ],
        ids=["zero", "constant", "oscillating", "rotating"],
    )
    def test_presets_self_consistent(self, cfg):
        report = validate(cfg)
        assert report.ok, str(report)


class TestSerialization:
    def test_round_trip(self):
        cfg = preset("uniform_oscillating", mu=0.25, epsilon=0.01)
        again = config_from_dict(config_to_dict(cfg))
        assert again.mu == cfg.mu
        assert again.electric.kind == "uniform_oscillating"
        q = np.array([0.4 - 0.3j])
        t = np.array([0.37])
        np.testing.assert_allclose(again.electric.e(t, q), cfg.electric.e(t, q))

    def test_unknown_keys_rejected(self):
        with pytest.raises(FieldConfigError):
            config_from_dict({"mu": 0.5, "charge": 2})
        with pytest.raises(FieldConfigError):
            config_from_dict({"mu": 0.5, "magnetic": {"kind": "constant", "b": 1, "x": 2}})
        with pytest.raises(FieldConfigError):
            config_from_dict({"mu": 0.5, "electric": {"kind": "banana"}})
