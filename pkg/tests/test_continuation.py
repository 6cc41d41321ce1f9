import numpy as np
import pytest

from plapext import continuation as cont
from plapext import mesh as meshmod
from plapext import operator_model as om
from plapext import solver as solvermod
from plapext.mesh import DomainConfig, Puncture


@pytest.fixture(scope="module")
def spec4():
    return om.make_operator(4.0, 2, om.ConstantFamily(1.0))


def small_base(values=(-1.0, 1.0), outer=0.0):
    return DomainConfig(punctures=(Puncture((-1.0, 0.0), values[0]),
                                   Puncture((1.0, 0.0), values[1])),
                        hole_radius=0.4, outer_radius=2.5, outer_value=outer,
                        spacing=0.1, split="avg")


def small_plan(base=None, **kw):
    args = dict(base=base or small_base(), r_schedule=(0.4, 0.3),
                R_schedule=(2.5, 3.0), probe_region=(-0.4, 0.4, 0.6, 1.2),
                h_rule=lambda r, R: 0.1)
    args.update(kw)
    return cont.ContinuationPlan(**args)


class TestContinuationPlan:
    def test_schedule_validation(self):
        with pytest.raises(cont.ContinuationError, match="decreasing"):
            small_plan(r_schedule=(0.3, 0.4))
        with pytest.raises(cont.ContinuationError, match="increasing"):
            small_plan(R_schedule=(3.0, 2.5))
        with pytest.raises(cont.ContinuationError, match="nonempty"):
            small_plan(r_schedule=())

    def test_probe_region_validation(self):
        with pytest.raises(cont.ContinuationError, match="empty probe"):
            small_plan(probe_region=(0.5, 0.4, 0.0, 1.0))
        with pytest.raises(cont.ContinuationError, match="outer ball"):
            small_plan(probe_region=(2.0, 3.0, 0.0, 1.0))
        with pytest.raises(cont.ContinuationError, match="touches the hole"):
            small_plan(probe_region=(0.8, 1.2, -0.2, 0.2))

    def test_mode_validation(self):
        with pytest.raises(cont.ContinuationError, match="traversal mode"):
            small_plan(mode="spiral")

    def test_diagonal_stages(self):
        plan = small_plan(r_schedule=(0.4, 0.3, 0.2), R_schedule=(2.5, 3.0))
        assert plan.stages() == [(0.4, 2.5), (0.3, 3.0), (0.2, 3.0)]

    def test_two_phase_stages(self):
        plan = small_plan(r_schedule=(0.4, 0.3), R_schedule=(2.5, 3.0),
                          mode="two_phase")
        assert plan.stages() == [(0.4, 2.5), (0.3, 2.5), (0.3, 3.0)]

    def test_spacing_snaps_to_grid(self):
        plan = small_plan(h_rule=None)
        h = plan.spacing_for(0.3, 2.5)
        assert h < 0.3
        n = 2.0 * 2.5 / h
        assert abs(n - round(n)) < 1e-12

    def test_plan_from_dict(self):
        d = {"r_schedule": [0.4, 0.3], "R_schedule": [2.5, 3.0],
             "probe_region": [-0.4, 0.4, 0.6, 1.2], "h": 0.1}
        plan = cont.plan_from_dict(small_base(), d)
        assert plan.spacing_for(0.4, 2.5) == pytest.approx(0.1)
        with pytest.raises(cont.ContinuationError, match="missing field"):
            cont.plan_from_dict(small_base(), {"r_schedule": [0.4]})


class TestRunContinuation:
    def test_constant_data_every_stage(self, spec4):
        base = small_base(values=(2.0, 2.0), outer=2.0)
        results = cont.run_continuation(small_plan(base=base), spec4)
        assert len(results) == 2
        for res in results:
            act = res.solution.mesh.active
            np.testing.assert_array_equal(res.solution.values[act], 2.0)
        assert np.isnan(results[0].probe_delta)
        assert results[1].probe_delta == 0.0

    def test_zero_data_single_puncture(self, spec4):
        base = DomainConfig(punctures=(Puncture((0.0, 0.0), 0.0),),
                            hole_radius=0.4, outer_radius=2.5, outer_value=0.0,
                            spacing=0.1)
        plan = cont.ContinuationPlan(base=base, r_schedule=(0.4, 0.3),
                                     R_schedule=(2.5,),
                                     probe_region=(0.6, 1.2, 0.6, 1.2),
                                     h_rule=lambda r, R: 0.1)
        for res in cont.run_continuation(plan, spec4):
            act = res.solution.mesh.active
            np.testing.assert_array_equal(res.solution.values[act], 0.0)

    def test_warm_start_converges_all_stages(self, spec4):
        results = cont.run_continuation(small_plan(), spec4)
        assert all(res.solution.converged for res in results)
        assert results[1].probe_delta < 1.0


class TestBarrierSandwich:
    def test_constant_data_zero_violation(self, spec4):
        base = small_base(values=(1.0, 1.0), outer=1.0)
        sol = solvermod.solve(meshmod.build_mesh(base), spec4)
        assert cont.barrier_sandwich_check(sol, spec4) == 0.0

    def test_small_run_within_budget(self, spec4):
        results = cont.run_continuation(small_plan(), spec4)
        final = results[-1]
        violation = cont.barrier_sandwich_check(final.solution, spec4)
        assert violation <= 5.0 * final.spacing


class TestLpGradientTail:
    def test_constant_solution_zero_tails(self, spec4):
        base = small_base(values=(1.0, 1.0), outer=1.0)
        sol = solvermod.solve(meshmod.build_mesh(base), spec4)
        tails = cont.lp_gradient_tail(sol, spec4, 1.6, [2.0, 2.4])
        assert tails == [0.0, 0.0]

    def test_unbounded_counterexample_grows(self, spec4):
        # the power profile |x|^{2/3} is p-harmonic but unbounded: its
        # doubling increments must grow, the opposite of the bounded case
        cfg = DomainConfig(punctures=(Puncture((0.0, 0.0), 0.0),),
                           hole_radius=0.3, outer_radius=4.0, outer_value=0.0,
                           spacing=0.05)
        mesh = meshmod.build_mesh(cfg)
        rr = np.hypot(mesh.coords[:, 0], mesh.coords[:, 1])
        values = np.where(mesh.active, rr ** (2.0 / 3.0), np.nan)
        sol = solvermod.DiscreteSolution(mesh=mesh, values=values, energy=0.0,
                                         grad_inf_norm=0.0, iterations=0,
                                         trace=[], converged=True)
        I1, I2, I4 = cont.lp_gradient_tail(sol, spec4, 0.5, [1.0, 2.0, 4.0])
        assert 0.0 < I2 - I1 < I4 - I2

    def test_tails_nondecreasing(self, spec4):
        results = cont.run_continuation(small_plan(), spec4)
        tails = cont.lp_gradient_tail(results[-1].solution, spec4, 1.5,
                                      [2.0, 2.5, 3.0])
        assert tails[0] <= tails[1] <= tails[2]

    def test_error_paths(self, spec4):
        results = cont.run_continuation(small_plan(), spec4)
        sol = results[-1].solution
        with pytest.raises(cont.ContinuationError, match="cover every hole"):
            cont.lp_gradient_tail(sol, spec4, 0.5, [2.0])
        with pytest.raises(cont.ContinuationError, match="exceeds the mesh"):
            cont.lp_gradient_tail(sol, spec4, 1.5, [10.0])
        with pytest.raises(cont.ContinuationError, match="empty annulus"):
            cont.lp_gradient_tail(sol, spec4, 1.5, [1.5])


class TestLiouvilleCheck:
    def test_zero_constant(self, spec4):
        ok, report = cont.liouville_check(small_plan(), spec4, c=0.0)
        assert ok
        assert all(d <= report["threshold"] for d in report["stage_deviations"])

    def test_translated_constant(self, spec4):
        ok, report = cont.liouville_check(small_plan(), spec4, c=7.5)
        assert ok
        assert report["constant"] == 7.5

    def test_unequal_data_breaks_constancy(self, spec4):
        # with m = (0, 1) the solution is forced away from any constant:
        # the equal-values hypothesis is necessary, not decorative
        base = small_base(values=(0.0, 1.0), outer=0.5)
        results = cont.run_continuation(small_plan(base=base), spec4)
        final = results[-1].solution
        act = final.mesh.active
        assert float(np.max(np.abs(final.values[act] - 0.0))) > 0.9
