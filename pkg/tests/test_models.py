"""
Tests for Pydantic models.

Tests validation and serialization of the scenario blocks and the
numeric value models.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.control import ControllerSpec, StepSizeRule, VarLimits
from src.models.dynamics import DynamicsSpec, LimitsSpec
from src.models.network import LineSpec, PerUnitBase, RadialNetwork
from src.models.oracle import BoundParams
from src.models.scenario import Scenario
from src.models.schedule import ScheduleMode, ScheduleSpec
from src.validators.custom_types import (
    broadcast_vector,
    validate_forgetting_factor,
    validate_unit_interval,
)

# =============================================================================
# Custom Types
# =============================================================================


class TestFloatVector:
    """Tests for the FloatVector annotation."""

    def test_list_becomes_readonly_array(self):
        """Test that lists are converted to read-only float arrays."""
        limits = VarLimits(lower=[-1, -2], upper=[1, 2])
        assert limits.lower.dtype == np.float64
        assert not limits.lower.flags.writeable

    def test_rejects_matrix(self):
        """Test rejection of two-dimensional input."""
        with pytest.raises(ValidationError, match="one-dimensional"):
            VarLimits(lower=[[0.0]], upper=[[1.0]])

    def test_rejects_nan(self):
        """Test rejection of non-finite entries."""
        with pytest.raises(ValidationError, match="finite"):
            VarLimits(lower=[float("nan")], upper=[1.0])

    def test_rejects_string(self):
        """Test rejection of strings."""
        with pytest.raises(ValidationError, match="list of numbers"):
            VarLimits(lower="abc", upper=[1.0])

    def test_serializes_to_list(self):
        """Test JSON serialization of vectors."""
        limits = VarLimits(lower=[-0.5], upper=[0.5])
        assert limits.to_json_dict() == {"lower": [-0.5], "upper": [0.5]}


class TestScalarValidators:
    """Tests for scalar validation helpers."""

    def test_unit_interval(self):
        """Test (0, 1] and [0, 1] checks."""
        assert validate_unit_interval(1.0) == 1.0
        assert validate_unit_interval(0.0, open_left=False) == 0.0
        with pytest.raises(ValueError, match="positive"):
            validate_unit_interval(0.0)
        with pytest.raises(ValueError, match="exceeds 1"):
            validate_unit_interval(1.5)

    def test_forgetting_factor(self):
        """Test |alpha| < 1."""
        assert validate_forgetting_factor(-0.999) == -0.999
        with pytest.raises(ValueError):
            validate_forgetting_factor(1.0)

    def test_broadcast_scalar(self):
        """Test expansion of scalars."""
        out = broadcast_vector(0.1, 3)
        np.testing.assert_array_equal(out, [0.1, 0.1, 0.1])
        assert not out.flags.writeable

    def test_broadcast_wrong_length(self):
        """Test rejection of vectors of the wrong length."""
        with pytest.raises(ValueError, match="Expected 3 entries"):
            broadcast_vector([1.0, 2.0], 3)


# =============================================================================
# Network
# =============================================================================


class TestPerUnitBase:
    """Tests for per-unit conversion."""

    def test_feeder_line_conversion(self):
        """Test conversion of a 0.233 + j0.366 ohm line on 4.16 kV / 1 MVA."""
        base = PerUnitBase()
        assert base.z_base == pytest.approx(17.3056)
        assert base.ohms_to_pu(0.233) == pytest.approx(0.013464, rel=1e-4)
        assert base.ohms_to_pu(0.366) == pytest.approx(0.021149, rel=1e-4)

    def test_kvar(self):
        """Test kVAr conversion."""
        assert PerUnitBase(mva=2.0).kvar_to_pu(100.0) == pytest.approx(0.05)


class TestLineSpec:
    """Tests for line validation."""

    def test_alias_fields(self):
        """Test that lines are written with from/to keys."""
        line = LineSpec.model_validate({"from": 0, "to": 1, "r": 0.1, "x": 0.2})
        assert (line.from_bus, line.to_bus) == (0, 1)
        assert line.to_json_dict()["from"] == 0

    def test_zero_reactance_rejected(self):
        """Test that x must be positive."""
        with pytest.raises(ValidationError):
            LineSpec.model_validate({"from": 0, "to": 1, "r": 0.1, "x": 0.0})

    def test_negative_resistance_rejected(self):
        """Test that r must be non-negative."""
        with pytest.raises(ValidationError):
            LineSpec.model_validate({"from": 0, "to": 1, "r": -0.1, "x": 0.2})

    def test_self_loop_rejected(self):
        """Test that a line cannot connect a bus to itself."""
        with pytest.raises(ValidationError, match="itself"):
            LineSpec.model_validate({"from": 2, "to": 2, "r": 0.1, "x": 0.2})


class TestRadialNetwork:
    """Tests for the topology block."""

    def test_bus_count(self, network_factory):
        """Test that n counts non-root buses."""
        assert network_factory.chain(5).n == 5

    def test_unknown_bus_rejected(self):
        """Test rejection of lines naming buses outside the network."""
        with pytest.raises(ValidationError, match="references bus 3"):
            RadialNetwork(buses=2, lines=[{"from": 0, "to": 3, "r": 0.1, "x": 0.1}])


# =============================================================================
# Controller, dynamics and schedule blocks
# =============================================================================


class TestControllerSpec:
    """Tests for the controller block."""

    def test_defaults(self):
        """Test default rule and profile."""
        spec = ControllerSpec()
        assert spec.epsilon == StepSizeRule.AUTO_SYNC
        assert spec.mu == "flat"

    def test_numeric_epsilon(self):
        """Test that numeric step-sizes are kept as numbers."""
        assert ControllerSpec(epsilon=0.01).epsilon == 0.01

    def test_rule_from_string(self):
        """Test parsing of rule names."""
        assert ControllerSpec(epsilon="auto_dynamic").epsilon == StepSizeRule.AUTO_DYNAMIC

    def test_non_positive_epsilon_rejected(self):
        """Test rejection of zero and negative step-sizes."""
        with pytest.raises(ValidationError):
            ControllerSpec(epsilon=-0.1)

    def test_unknown_rule_rejected(self):
        """Test rejection of unknown rule names."""
        with pytest.raises(ValidationError):
            ControllerSpec(epsilon="auto_fast")

    def test_safety_range(self):
        """Test that safety lies in (0, 1]."""
        with pytest.raises(ValidationError):
            ControllerSpec(safety=1.5)


class TestVarLimits:
    """Tests for the VAR box."""

    def test_empty_box_rejected(self):
        """Test rejection of lower > upper, naming the bus."""
        with pytest.raises(ValidationError, match=r"buses \[2\]"):
            VarLimits(lower=[0.0, 0.2], upper=[0.1, 0.1])

    def test_contains(self):
        """Test membership."""
        limits = VarLimits(lower=[-1.0, -1.0], upper=[1.0, 1.0])
        assert limits.contains(np.array([0.5, -1.0]))
        assert not limits.contains(np.array([1.5, 0.0]))


class TestDynamicsSpec:
    """Tests for the dynamics block."""

    def _limits(self) -> dict:
        return {"lower": -0.1, "upper": 0.1}

    def test_alpha_must_be_stationary(self):
        """Test rejection of |alpha| >= 1."""
        with pytest.raises(ValidationError):
            DynamicsSpec(alpha=1.0, limits=self._limits())

    def test_sigma_parameterization(self):
        """Test that sigma is squared."""
        spec = DynamicsSpec(alpha=0.5, sigma=0.01, limits=self._limits())
        assert spec.innovation_variance == pytest.approx(1e-4)

    def test_stationary_variance_parameterization(self):
        """Test sigma2 = var * (1 - alpha^2)."""
        spec = DynamicsSpec(alpha=0.9, stationary_variance=1e-5, limits=self._limits())
        assert spec.innovation_variance == pytest.approx(1e-5 * 0.19)

    def test_noiseless_default(self):
        """Test that no noise parameter means a static environment."""
        assert DynamicsSpec(limits=self._limits()).innovation_variance == 0.0

    def test_two_noise_parameters_rejected(self):
        """Test that only one noise parameterization is allowed."""
        with pytest.raises(ValidationError, match="only one"):
            DynamicsSpec(sigma2=1e-6, sigma=1e-3, limits=self._limits())

    def test_scaled_limits_need_series(self):
        """Test that scaled mode requires a scale series."""
        with pytest.raises(ValidationError, match="scale"):
            LimitsSpec(mode="scaled", lower=-0.1, upper=0.1)

    def test_scale_values_in_unit_interval(self):
        """Test rejection of multipliers outside (0, 1]."""
        with pytest.raises(ValidationError):
            LimitsSpec(mode="scaled", lower=-0.1, upper=0.1, scale=[1.0, 0.0])


class TestScheduleSpec:
    """Tests for the schedule block."""

    def test_eta_zero_rejected(self):
        """Test that a zero duty cycle is rejected."""
        with pytest.raises(ValidationError):
            ScheduleSpec(mode="duty_cycle", K=50, eta=0.0)

    def test_odd_k_rejected_for_duty_cycle(self):
        """Test that duty cycling needs an even K."""
        with pytest.raises(ValidationError, match="even K"):
            ScheduleSpec(mode="duty_cycle", K=5, eta=0.5)

    def test_file_mode_needs_path(self):
        """Test that file mode requires a path."""
        with pytest.raises(ValidationError, match="path"):
            ScheduleSpec(mode="file", K=3)

    def test_idle_mode(self):
        """Test that the idle schedule parses."""
        assert ScheduleSpec(mode="none").mode == ScheduleMode.NONE


# =============================================================================
# Scenario and bounds
# =============================================================================


class TestScenario:
    """Tests for whole scenarios."""

    def test_valid_scenario(self, scenario_factory):
        """Test that the factory scenario validates."""
        scenario = scenario_factory.create(n=3)
        assert scenario.n == 3
        assert scenario.realizations == 2

    def test_mu_length_checked(self, scenario_factory):
        """Test that per-bus lists must match the topology."""
        data = scenario_factory.data(n=3, controller={"mu": [1.0, 1.0]})
        with pytest.raises(ValidationError, match="controller.mu has 2 entries"):
            Scenario.model_validate(data)

    def test_limit_vectors_ordered(self, scenario_factory):
        """Test that per-bus limits are checked bus by bus."""
        dynamics = scenario_factory.data(n=2)["dynamics"]
        dynamics["limits"] = {"lower": [-0.1, 0.2], "upper": 0.1}
        with pytest.raises(ValidationError, match=r"buses \[2\]"):
            Scenario.model_validate(scenario_factory.data(n=2, dynamics=dynamics))

    def test_transition_shape_checked(self, scenario_factory):
        """Test that the transition matrix must be N×N."""
        data = scenario_factory.data(n=2, dynamics={"transition": [[0.5]]})
        with pytest.raises(ValidationError, match="2×2"):
            Scenario.model_validate(data)

    def test_extra_keys_rejected(self, scenario_factory):
        """Test that unknown keys are reported."""
        data = scenario_factory.data()
        data["horizn"] = 10
        with pytest.raises(ValidationError):
            Scenario.model_validate(data)

    def test_shipped_scenarios_validate(self, scenario_dir):
        """Test that every shipped scenario parses."""
        for name in ("unit", "tc1", "tc2", "tc3"):
            text = (scenario_dir / f"{name}.json").read_text()
            assert Scenario.model_validate_json(text).name == name


class TestBoundParams:
    """Tests for bound parameters."""

    def test_c_above_m_rejected(self):
        """Test that C cannot exceed M."""
        with pytest.raises(ValidationError, match="exceeds"):
            BoundParams(c_min=2.0, m_lip=1.0, epsilon=0.1, b2=0.0)
