"""Smoke test for the fracneumann_py extension."""

import math

import fracneumann_py as fn


def main():
    dom = fn.Domain.interval(0.0, 1.0)
    ker = fn.Kernel(0.75)
    mesh = fn.Mesh.graded(dom, 64, 1.5)
    assert mesh.node_count == 65

    sys_ = fn.System(mesh, dom, ker, "cos_pi")
    assert sys_.null_space_ratio() <= 1e-10
    sol = sys_.solve()
    assert sol["residual"] <= 1e-8
    u = sol["values"]
    assert abs(u[0] + u[-1]) < 1e-6 * max(abs(v) for v in u)

    try:
        fn.System(mesh, dom, ker, "one").solve()
    except ValueError as e:
        assert "incompatible" in str(e)
    else:
        raise AssertionError("f = 1 must be rejected")

    heat = sys_.heat([1.0 + x * x for (x,) in mesh.nodes], 1e-3, 20)
    assert heat["mass_drift"] <= 1e-10 and heat["energy_monotone"]

    ext = fn.Extension(mesh, u, dom, ker)
    lo, hi = ext.interior_range()
    v = ext.value([1.3])
    assert lo - 1e-12 <= v <= hi + 1e-12
    assert abs(ext.normal_derivative([1.3])) <= 1e-8 * ker.c_ns * max(abs(x) for x in u) * 10

    pn = fn.power_null(0.75, [0.1, 1.0, 5.0])
    assert pn["max_defect"] <= 1e-4
    sup = fn.supersolution(0.75, 1.0, [0.05 * k for k in range(1, 20)])
    assert sup["min_ratio"] > 0

    est = fn.kernel_estimates(dom, ker, samples=50)
    assert len(est["samples"]) == 50

    names = [n for n, _ in fn.list_experiments()]
    assert "heat-mass" in names and len(names) == 7
    echo = fn.validate_config('experiment = "heat-mass"\nmesh.n = 32')
    rep = fn.run_experiment(echo)
    assert rep["pass"], rep["verdicts"]

    total, frac, aux = ker.evaluate(dom, [0.2], [0.3])
    assert math.isclose(total, frac + aux) and aux > 0
    print("fracneumann_py smoke test passed")


if __name__ == "__main__":
    main()
