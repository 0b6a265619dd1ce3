"""Property suite behind the ``verify`` CLI command.

Each check solves small problems and measures a residual against the
tolerance of the property it verifies: the closed-form trial-to-test image,
the piecewise flux test function, the projection identity of the one-element
method, the containment of the non-hybrid test space in the hybrid one, the
agreement of the mixed and Schur solution paths, the discrete orthogonality
identities, and the one-element inf-sup value.
"""

from dataclasses import dataclass

import numpy as np

from . import adaptivity, dpg_engine, ode1d, poisson2d
from .mesh import uniform_interval_mesh, uniform_square_mesh


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return (
            f"{status}  {self.name}: residual {self.residual:.3e}"
            f" vs tolerance {self.tolerance:.1e}{extra}"
        )


def check_trial_to_test_closed_form(degrees=(0, 1, 2, 3)):
    worst = 0.0
    for p in degrees:
        form = ode1d.OneElementPG(p, ode1d.layer_problem(40.0))
        T = dpg_engine.trial_to_test(form.element_gram(0), form.element_bmat(0))
        T_exact = ode1d.onelem_closed_form_T(p)
        worst = max(worst, float(np.abs(T - T_exact).max()))
    return CheckResult(
        "trial-to-test closed form", worst <= 1e-10, worst, 1e-10, f"p in {list(degrees)}"
    )


def check_flux_test_function(m_values=(2, 4, 8), p=1):
    worst = 0.0
    for m in m_values:
        mesh = uniform_interval_mesh(m)
        form = ode1d.HybridDPG1D(p, mesh, ode1d.layer_problem(40.0))
        T_by_elem = [
            dpg_engine.trial_to_test(form.element_gram(k), form.element_bmat(k))
            for k in range(m)
        ]
        for i in range(1, m + 1):
            ref = ode1d.hybrid_flux_test_coeffs(form, i)
            num = np.zeros_like(ref)
            for k in range(m):
                dofs = list(form.element_trial_dofs(k))
                gd = form.flux_dof(i)
                if gd in dofs:
                    num[k] = T_by_elem[k][:, dofs.index(gd)]
            worst = max(worst, float(np.abs(num - ref).max()))
    return CheckResult(
        "flux test-function formula", worst <= 1e-10, worst, 1e-10, f"m in {list(m_values)}"
    )


def check_projection_theorem(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    # random polynomial exact solutions, u(0) = 0
    for p in (1, 3):
        coeffs = rng.standard_normal(p + 4)
        poly = np.polynomial.Polynomial(np.concatenate([[0.0], coeffs]))
        dpoly = poly.deriv()
        prob = ode1d.Ode1dProblem(f=lambda x: dpoly(np.asarray(x)), u=lambda x: poly(np.asarray(x)))
        form = ode1d.OneElementPG(p, prob)
        sol = dpg_engine.solve(dpg_engine.assemble_normal(form))
        proj = ode1d.l2_projection_onelem(prob.u, p)
        worst = max(worst, float(np.abs(sol.x[: p + 1] - proj).max()))
        worst = max(worst, abs(form.u1_value(sol.x) - poly(1.0)))
    # the sharp-layer solution
    u, _ = ode1d.layer_solution(40.0)
    for p in (2, 4, 8):
        form = ode1d.OneElementPG(p, ode1d.layer_problem(40.0))
        sol = dpg_engine.solve(dpg_engine.assemble_normal(form))
        proj = ode1d.l2_projection_onelem(u, p)
        worst = max(worst, float(np.abs(sol.x[: p + 1] - proj).max()))
        worst = max(worst, abs(form.u1_value(sol.x) - 1.0))
    return CheckResult("one-element projection identity", worst <= 1e-8, worst, 1e-8)


def check_hybrid_containment(cases=((2, 0), (2, 1), (4, 0), (4, 1))):
    worst = 0.0
    for m, p in cases:
        d = ode1d.hybrid_containment_check(p, uniform_interval_mesh(m))
        worst = max(worst, d)
    return CheckResult("hybrid test-space containment", worst <= 1e-8, worst, 1e-8)


def sample_problems(seed=0):
    """Small solvable formulations covering every code path."""
    u, f = ode1d.layer_solution(40.0)
    smooth = ode1d.Ode1dProblem(
        f=lambda x: np.cos(np.asarray(x)), u=lambda x: np.sin(np.asarray(x))
    )
    problems = [
        ("onelem p=3 layer", ode1d.OneElementPG(3, ode1d.layer_problem(40.0))),
        ("hybrid m=4 p=1 layer", ode1d.HybridDPG1D(1, uniform_interval_mesh(4), ode1d.layer_problem(40.0))),
        ("hybrid m=8 p=2 smooth", ode1d.HybridDPG1D(2, uniform_interval_mesh(8), smooth)),
        ("noibp m=4 p=2 smooth", ode1d.LeastSquaresNoIBP(2, uniform_interval_mesh(4), smooth)),
        ("poisson n=2 p=1 r=3", poisson2d.PoissonDPG(1, 3, uniform_square_mesh(2), poisson2d.sin_sin_case().f)),
        ("poisson n=4 p=0 r=2", poisson2d.PoissonDPG(0, 2, uniform_square_mesh(4), adaptivity.gaussian_source())),
    ]
    return problems


def check_mixed_vs_schur(seed=0, extra_poisson_n=(8,)):
    problems = sample_problems(seed)
    for n in extra_poisson_n:
        problems.append(
            (
                f"poisson n={n} p=1 r=3",
                poisson2d.PoissonDPG(1, 3, uniform_square_mesh(n), poisson2d.sin_sin_case().f),
            )
        )
    worst = 0.0
    for name, form in problems:
        system = dpg_engine.assemble_normal(form)
        sol = dpg_engine.solve(system)
        _, x_mixed = dpg_engine.solve_mixed(form)
        scale = np.linalg.norm(sol.x) or 1.0
        worst = max(worst, float(np.linalg.norm(sol.x - x_mixed) / scale))
    return CheckResult("mixed vs Schur solution paths", worst <= 1e-8, worst, 1e-8)


def check_orthogonality(seed=0):
    worst = 0.0
    for name, form in sample_problems(seed):
        system = dpg_engine.assemble_normal(form)
        sol = dpg_engine.solve(system)
        res = dpg_engine.orthogonality_residuals(system, sol)
        scale = res["scale"] or 1.0
        worst = max(worst, res["galerkin"] / scale, res["test_space"] / scale)
    return CheckResult("discrete orthogonality identities", worst <= 1e-8, worst, 1e-8)


def check_infsup_onelem(p=3):
    form = ode1d.OneElementPG(p, ode1d.layer_problem(40.0))
    value = dpg_engine.infsup_surrogate(form)
    dev = abs(value - 1.0)
    return CheckResult("one-element inf-sup value", dev <= 0.02, dev, 0.02, f"value {value:.6f}")


def run_all(seed=0):
    return [
        check_trial_to_test_closed_form(),
        check_flux_test_function(),
        check_projection_theorem(seed),
        check_hybrid_containment(),
        check_mixed_vs_schur(seed),
        check_orthogonality(seed),
        check_infsup_onelem(),
    ]
