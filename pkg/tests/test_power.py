import pytest
from hypothesis import given
from hypothesis import strategies as st

from clustersim import (CarbonIntensity, EfficiencyChain, EfficiencyStage, MetricsAccumulator,
                        Node, ResourceVector, RewardWeights, apply_chain, facility_power,
                        finalize_metrics, node_power, slowdown)
from clustersim.errors import RangeError, SchemaError
from clustersim.power import joules_to_kwh, load_carbon_intensity

from conftest import DATA_DIR


def make_node(cores=32, gpus=0, idle=200.0, peak=600.0, gpu_idle=50.0, gpu_max=400.0):
    return Node(node_id="n1", partition="p",
                capacity=ResourceVector(cores=cores, gpus=gpus, memory_mb=1000),
                idle_power_w=idle, max_power_w=peak,
                gpu_idle_power_w=gpu_idle if gpus else 0.0,
                gpu_max_power_w=gpu_max if gpus else 0.0)


def constant_chain(*etas):
    return EfficiencyChain(stages=tuple(
        EfficiencyStage(name=f"s{i}", points=((0.0, eta),)) for i, eta in enumerate(etas)))


class TestNodePower:
    def test_idle_floor(self):
        assert node_power(make_node(), []) == 200.0

    def test_linear_midpoint(self):
        node = make_node(cores=32, idle=200.0, peak=600.0)
        tenants = [(ResourceVector(cores=32), 0.5, 0.0)]
        assert node_power(node, tenants) == 400.0

    def test_two_half_tenants_equal_one_full(self):
        node = make_node(cores=32)
        split = [(ResourceVector(cores=16), 1.0, 0.0), (ResourceVector(cores=16), 1.0, 0.0)]
        whole = [(ResourceVector(cores=32), 1.0, 0.0)]
        assert node_power(node, split) == node_power(node, whole)

    def test_gpu_idle_draw_when_allocated(self):
        node = make_node(gpus=4)
        tenants = [(ResourceVector(cores=0, gpus=2), 0.0, 0.0)]
        assert node_power(node, tenants) == 200.0 + 2 * 50.0

    def test_gpu_dynamic_range(self):
        node = make_node(gpus=4)
        tenants = [(ResourceVector(cores=0, gpus=2), 0.0, 1.0)]
        assert node_power(node, tenants) == 200.0 + 2 * 400.0

    def test_capped_at_full_range(self):
        node = make_node(cores=32, gpus=2)
        tenants = [(ResourceVector(cores=32, gpus=2), 1.0, 1.0)]
        assert node_power(node, tenants) == 600.0 + 2 * 400.0 == node.rated_power_w

    @given(
        utils=st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=4),
        bump=st.floats(0.0, 1.0, allow_nan=False),
        index=st.integers(0, 3),
    )
    def test_monotone_in_utilization(self, utils, bump, index):
        node = make_node(cores=32)
        index = index % len(utils)
        share = ResourceVector(cores=32 // len(utils))
        tenants = [(share, u, 0.0) for u in utils]
        raised = list(tenants)
        raised[index] = (share, min(1.0, utils[index] + bump), 0.0)
        assert node_power(node, raised) >= node_power(node, tenants)

    def test_monotone_in_tenant_count(self):
        node = make_node(cores=32)
        one = [(ResourceVector(cores=8), 0.7, 0.0)]
        two = one + [(ResourceVector(cores=8), 0.7, 0.0)]
        assert node_power(node, two) >= node_power(node, one)


class TestApplyChain:
    def test_identity_chain(self):
        power, loss = apply_chain(1000.0, constant_chain(1.0), rated_power_w=1000.0)
        assert power == 1000.0 and loss == 0.0

    def test_single_stage_exact(self):
        power, loss = apply_chain(1000.0, constant_chain(0.95), rated_power_w=1000.0)
        assert power == 1000.0 / 0.95
        assert loss == 1000.0 / 0.95 - 1000.0

    def test_two_stages_product_oracle(self):
        # oracle: direct product of the stage efficiencies
        power, _ = apply_chain(1000.0, constant_chain(0.98, 0.95), rated_power_w=2000.0)
        assert power == pytest.approx(1000.0 / (0.98 * 0.95), rel=1e-12)

    def test_empty_chain_is_identity(self):
        assert apply_chain(500.0, EfficiencyChain(), 1000.0) == (500.0, 0.0)

    def test_load_dependent_interpolation(self):
        stage = EfficiencyStage(name="s", points=((0.0, 0.8), (1.0, 1.0)))
        chain = EfficiencyChain(stages=(stage,))
        power, _ = apply_chain(500.0, chain, rated_power_w=1000.0)
        assert power == 500.0 / 0.9  # eta interpolated at load 0.5

    def test_clamped_beyond_endpoints(self):
        stage = EfficiencyStage(name="s", points=((0.2, 0.9), (0.8, 0.95)))
        chain = EfficiencyChain(stages=(stage,))
        low, _ = apply_chain(100.0, chain, rated_power_w=1000.0)
        high, _ = apply_chain(950.0, chain, rated_power_w=1000.0)
        assert low == 100.0 / 0.9
        assert high == 950.0 / 0.95

    def test_curve_validation(self):
        with pytest.raises(RangeError):
            EfficiencyStage(name="s", points=((0.0, 0.0),))
        with pytest.raises(SchemaError):
            EfficiencyStage(name="s", points=((0.5, 0.9), (0.2, 0.9)))
        with pytest.raises(SchemaError):
            EfficiencyStage(name="s", points=())


class TestFacilityPower:
    def test_pue_multiplier(self):
        assert facility_power(10_000.0, 1.2) == 12_000.0

    def test_pue_one_identity(self):
        assert facility_power(777.0, 1.0) == 777.0

    def test_zero(self):
        assert facility_power(0.0, 1.5) == 0.0


class TestMetrics:
    def test_slowdown_formula(self):
        assert slowdown(100.0, 50.0) == 3.0

    def test_slowdown_minimum(self):
        assert slowdown(0.0, 50.0) == 1.0

    def test_energy_carbon_unit_arithmetic(self):
        joules = 12_000.0 * 600.0
        kwh = joules_to_kwh(joules)
        assert kwh == 2.0
        assert kwh * 400.0 == 800.0

    def test_accumulator_identity(self):
        acc = MetricsAccumulator()
        acc.add_power_step(it_w=1000.0, chain_input_w=1100.0, facility_w=1320.0,
                           delta_s=1.0, intensity_g_per_kwh=400.0)
        assert acc.facility_energy_j == pytest.approx(
            acc.it_energy_j + acc.loss_energy_j + acc.pue_overhead_energy_j, rel=1e-12)

    def test_finalize_division_guard(self):
        metrics = finalize_metrics(MetricsAccumulator(), makespan_s=10.0)
        assert metrics.mean_slowdown is None
        assert metrics.throughput_jobs_per_s == 0.0

    def test_finalize_values(self):
        acc = MetricsAccumulator()
        for _ in range(600):
            acc.add_power_step(it_w=10_000.0, chain_input_w=10_000.0, facility_w=12_000.0,
                               delta_s=1.0, intensity_g_per_kwh=400.0)
        acc.add_finished_job(wait_s=100.0, run_s=50.0)
        metrics = finalize_metrics(acc, makespan_s=600.0)
        assert metrics.facility_energy_kwh == 2.0
        assert metrics.carbon_g == 800.0
        assert metrics.mean_slowdown == 3.0
        assert metrics.throughput_jobs_per_s == 1.0 / 600.0


class TestCarbonIntensity:
    def test_constant(self):
        c = CarbonIntensity.constant(400.0)
        assert c.at(0.0) == c.at(1e6) == 400.0

    def test_step_function_hold(self):
        c = CarbonIntensity([0.0, 100.0, 200.0], [400.0, 300.0, 350.0])
        assert c.at(0.0) == 400.0
        assert c.at(99.9) == 400.0
        assert c.at(100.0) == 300.0
        assert c.at(150.0) == 300.0
        assert c.at(1e9) == 350.0

    def test_before_first_point_holds_first(self):
        c = CarbonIntensity([100.0], [250.0])
        assert c.at(0.0) == 250.0

    def test_load_from_csv(self):
        c = load_carbon_intensity(str(DATA_DIR / "carbon_day.csv"))
        assert c.at(0.0) == 420.0
        assert c.at(43200.0) == 250.0

    def test_load_from_number_string(self):
        assert load_carbon_intensity("123.5").at(0.0) == 123.5


class TestRewardWeights:
    def test_all_zero_rejected(self):
        with pytest.raises(SchemaError):
            RewardWeights(w_throughput=0.0, w_energy=0.0, w_carbon=0.0)

    def test_negative_rejected(self):
        with pytest.raises(RangeError):
            RewardWeights(w_throughput=-1.0)

    def test_unknown_field_rejected(self):
        with pytest.raises(SchemaError, match="w_bogus"):
            RewardWeights.from_dict({"w_bogus": 1.0})
