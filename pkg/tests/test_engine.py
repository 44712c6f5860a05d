import json

import pytest

from clustersim import CarbonIntensity, Engine, SimConfig
from clustersim.errors import ConfigError, SchedulerViolation, StarvationGuard

from conftest import make_cluster, make_job


def run_engine(jobs, cluster, **cfg):
    engine = Engine(jobs, cluster, SimConfig(**cfg))
    return engine.run()


class TestStepTimeline:
    def test_hand_simulated_two_second_job(self):
        # Hand oracle: start t=0; active during [0,1) and [1,2); done at t=2.
        cluster = make_cluster([(1, 0, 0)])
        summary = run_engine([make_job("A", cores=1, walltime=2.0)], cluster)
        assert summary.steps == 2
        assert [r.util_fraction for r in summary.history] == [1.0, 1.0]
        assert summary.history[0].jobs_started == ("A",)
        assert summary.history[1].jobs_finished == ("A",)
        (stats,) = summary.job_stats
        assert (stats.start_time_s, stats.end_time_s) == (0.0, 2.0)

    def test_idle_floor_without_jobs(self):
        cluster = make_cluster([(2, 0, 0), (2, 0, 0)], idle_w=150.0)
        summary = run_engine([make_job("A", cores=1, submit=3.0, walltime=1.0)], cluster)
        for report in summary.history[:3]:
            assert report.it_power_w == 300.0

    def test_sequential_jobs_makespan_and_throughput(self):
        cluster = make_cluster([(1, 0, 0)])
        jobs = [make_job("A", cores=1, walltime=10.0), make_job("B", cores=1, walltime=10.0)]
        summary = run_engine(jobs, cluster)
        assert summary.metrics.makespan_s == 20.0
        assert summary.metrics.throughput_jobs_per_s == 2 / 20.0
        assert summary.steps == 20
        assert len(summary.history) == 20

    def test_freed_node_usable_next_step_not_same(self):
        cluster = make_cluster([(1, 0, 0)])
        jobs = [make_job("A", cores=1, walltime=10.0), make_job("B", cores=1, walltime=5.0)]
        summary = run_engine(jobs, cluster)
        starts = {s.job_id: s.start_time_s for s in summary.job_stats}
        # A completes during the step whose clock is 9 (end t=10); B starts at 10.
        assert starts == {"A": 0.0, "B": 10.0}

    def test_no_start_before_submit(self):
        cluster = make_cluster([(4, 0, 0)])
        summary = run_engine([make_job("A", cores=1, submit=7.0, walltime=2.0)], cluster)
        (stats,) = summary.job_stats
        assert stats.start_time_s == 7.0
        assert stats.wait_s == 0.0

    def test_horizon_cut(self):
        cluster = make_cluster([(1, 0, 0)])
        summary = run_engine([make_job("A", cores=1, walltime=100.0)], cluster, horizon_s=5.0)
        assert summary.steps == 5
        assert len(summary.history) == 5
        assert summary.jobs_unfinished == 1
        assert summary.truncated is True

    def test_fractional_walltime_rounds_up_to_step(self):
        cluster = make_cluster([(1, 0, 0)])
        summary = run_engine([make_job("A", cores=1, walltime=2.5)], cluster)
        (stats,) = summary.job_stats
        assert stats.end_time_s == 3.0
        assert stats.run_s == 3.0

    def test_empty_workload_needs_horizon(self):
        with pytest.raises(ConfigError):
            run_engine([], make_cluster([(1, 0, 0)]))


class TestReplayMode:
    def test_starts_exactly_at_trace_time(self):
        cluster = make_cluster([(4, 0, 0)])
        jobs = [make_job("A", cores=1, walltime=3.0, trace_start=5.0)]
        summary = run_engine(jobs, cluster, mode="replay")
        (stats,) = summary.job_stats
        assert stats.start_time_s == 5.0  # capacity was free earlier; start is pinned

    def test_missing_trace_start_rejected(self):
        with pytest.raises(ConfigError, match="trace_start_time_s"):
            run_engine([make_job("A", cores=1)], make_cluster([(1, 0, 0)]), mode="replay")

    def test_recorded_overlap_beyond_capacity_raises(self):
        cluster = make_cluster([(2, 0, 0)])
        jobs = [make_job("A", cores=2, walltime=10.0, trace_start=0.0, trace_nodes=["n1"]),
                make_job("B", cores=2, walltime=10.0, trace_start=5.0, trace_nodes=["n1"])]
        with pytest.raises(SchedulerViolation):
            run_engine(jobs, cluster, mode="replay")

    def test_measured_power_overrides_model(self):
        cluster = make_cluster([(4, 0, 0)], idle_w=100.0, max_w=400.0)
        job = make_job("A", cores=4, walltime=2.0, trace_start=0.0, trace_nodes=["n1"],
                       cpu_util=1.0, quanta=1.0, measured_power=[555.0, 565.0])
        summary = run_engine([job], cluster, mode="replay")
        assert [r.it_power_w for r in summary.history] == [555.0, 565.0]

    def test_measured_power_ignored_in_reschedule(self):
        cluster = make_cluster([(4, 0, 0)], idle_w=100.0, max_w=400.0)
        job = make_job("A", cores=4, walltime=2.0, cpu_util=1.0, quanta=1.0,
                       measured_power=[555.0, 565.0])
        summary = run_engine([job], cluster, mode="reschedule")
        assert [r.it_power_w for r in summary.history] == [400.0, 400.0]

    def test_unoccupied_nodes_add_idle(self):
        cluster = make_cluster([(4, 0, 0), (4, 0, 0)], idle_w=100.0)
        job = make_job("A", cores=4, walltime=1.0, trace_start=0.0, trace_nodes=["n1"],
                       quanta=1.0, measured_power=[500.0])
        summary = run_engine([job], cluster, mode="replay")
        assert summary.history[0].it_power_w == 600.0


class TestGuards:
    def test_unschedulable_job_raises_fast(self):
        cluster = make_cluster([(2, 0, 0)])
        with pytest.raises(StarvationGuard):
            run_engine([make_job("A", cores=5)], cluster)

    def test_unschedulable_after_drain(self):
        cluster = make_cluster([(2, 0, 0)])
        jobs = [make_job("A", cores=2, walltime=4.0), make_job("B", cores=3, submit=1.0)]
        with pytest.raises(StarvationGuard):
            run_engine(jobs, cluster)

    def test_clock_cap(self):
        cluster = make_cluster([(2, 0, 0)])
        jobs = [make_job("A", cores=1, walltime=2.0, trace_start=500.0)]
        config = SimConfig(mode="replay", starvation_cap_s=100.0)
        with pytest.raises(StarvationGuard, match="cap"):
            Engine(jobs, cluster, config).run()

    def test_horizon_suppresses_fast_guard(self):
        cluster = make_cluster([(2, 0, 0)])
        summary = run_engine([make_job("A", cores=5)], cluster, horizon_s=10.0)
        assert summary.jobs_unfinished == 1
        assert summary.steps == 10


class TestAccounting:
    def test_energy_identity_per_run(self):
        cluster = make_cluster(
            [(4, 0, 0), (4, 2, 0)], pue=1.3,
            stages=[[(0.0, 0.9), (1.0, 0.95)], [(0.0, 0.97)]])
        jobs = [make_job("A", cores=4, walltime=7.0, cpu_util=0.8),
                make_job("B", cores=2, gpus=1, walltime=11.0, cpu_util=0.5, gpu_util=0.9)]
        summary = run_engine(jobs, cluster)
        m = summary.metrics
        assert m.facility_energy_kwh == pytest.approx(
            m.it_energy_kwh + m.loss_energy_kwh + m.pue_overhead_energy_kwh, rel=1e-9)

    def test_carbon_time_series_steps(self):
        cluster = make_cluster([(1, 0, 0)], idle_w=0.0, max_w=3600.0)
        carbon = CarbonIntensity([0.0, 2.0], [1000.0, 2000.0])
        jobs = [make_job("A", cores=1, walltime=4.0, cpu_util=1.0)]
        summary = run_engine(jobs, cluster, carbon=carbon)
        # 3600 W for 4 s: 1 Wh per step; 2 steps at 1000 g/kWh + 2 at 2000 g/kWh
        assert summary.metrics.carbon_g == pytest.approx(0.001 * (1000 + 1000 + 2000 + 2000))

    def test_gflops_per_watt(self):
        cluster = make_cluster([(1, 0, 0)], idle_w=100.0, max_w=100.0)
        jobs = [make_job("A", cores=1, walltime=10.0, gflops=500.0)]
        summary = run_engine(jobs, cluster)
        assert summary.metrics.gflops_per_watt == pytest.approx(500.0 * 10 / (100.0 * 10))

    def test_utilization_fraction(self):
        cluster = make_cluster([(1, 0, 0), (1, 0, 0)])
        jobs = [make_job("A", cores=1, walltime=10.0)]
        summary = run_engine(jobs, cluster)
        assert summary.metrics.utilization == 0.5

    def test_power_ordering_every_step(self, sample_cluster, sample_trace_jobs):
        summary = Engine(sample_trace_jobs, sample_cluster,
                         SimConfig(scheduler="easy")).run()
        for report in summary.history:
            assert report.facility_power_w >= report.it_power_w >= 0.0
            assert report.loss_w >= 0.0

    def test_slowdown_recorded(self):
        cluster = make_cluster([(1, 0, 0)])
        jobs = [make_job("A", cores=1, walltime=10.0), make_job("B", cores=1, walltime=10.0)]
        summary = run_engine(jobs, cluster)
        by_id = {s.job_id: s for s in summary.job_stats}
        assert by_id["A"].slowdown == 1.0
        assert by_id["B"].slowdown == (10.0 + 10.0) / 10.0


class TestDeterminism:
    def test_same_inputs_identical_summaries(self, sample_cluster, sample_trace_jobs):
        def one():
            return Engine(sample_trace_jobs, sample_cluster, SimConfig(mode="replay")).run()

        a, b = one(), one()
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
        assert a.history == b.history
        assert a.job_stats == b.job_stats

    def test_report_count_matches_clock(self, sample_cluster, sample_trace_jobs):
        engine = Engine(sample_trace_jobs, sample_cluster, SimConfig(mode="replay"))
        summary = engine.run()
        assert len(summary.history) == int(engine.clock_s / engine.config.delta_s)


class TestEasyThroughEngine:
    def test_spec_instance_backfills(self):
        cluster = make_cluster([(1, 0, 0)] * 3)
        jobs = [make_job("A", cores=1, node_count=2, walltime=100.0),
                make_job("B", cores=1, node_count=3, walltime=10.0),
                make_job("C", cores=1, node_count=1, walltime=80.0)]
        summary = run_engine(jobs, cluster, scheduler="easy")
        starts = {s.job_id: s.start_time_s for s in summary.job_stats}
        assert starts == {"A": 0.0, "C": 0.0, "B": 100.0}

    def test_spec_instance_rejects_long_backfill(self):
        cluster = make_cluster([(1, 0, 0)] * 3)
        jobs = [make_job("A", cores=1, node_count=2, walltime=100.0),
                make_job("B", cores=1, node_count=3, walltime=10.0),
                make_job("C", cores=1, node_count=1, walltime=120.0)]
        summary = run_engine(jobs, cluster, scheduler="easy")
        starts = {s.job_id: s.start_time_s for s in summary.job_stats}
        assert starts == {"A": 0.0, "B": 100.0, "C": 110.0}
