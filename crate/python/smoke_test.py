"""Quick end-to-end check of the Python bindings."""

import math

import dosched


def main():
    u = dosched.PowerUtility(0.5, 0.3)
    assert abs(u.eval(0.0)) < 1e-12
    assert u.grad(0.0) > u.grad(1.0) > 0.0

    region = dosched.RateRegion(2, [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert region.contains([0.4, 0.4])
    assert not region.contains([1.0, 1.0])

    s = dosched.Scheduler(2, 1.0)
    a = s.admit(0, 2.0, u, 0)
    b = s.admit(1, 1.0, dosched.PowerUtility(0.2, 0.6), 1)
    for _ in range(3):
        rates = s.step([a, b], region)
        assert region.contains(rates, 1e-7)
    assert s.beta(a) >= 0.0 and s.primal() > 0.0

    c = dosched.competitive_constant(1.0)
    assert math.isclose(dosched.competitive_bound(1.0), 3.0 + 1.0 / (c - 1.0), rel_tol=1e-12)

    inst = dosched.generate_instance(7, horizon=20)
    again = dosched.Instance.from_text(inst.to_text())
    assert again.num_jobs == inst.num_jobs

    reward, dual = dosched.run(inst, "do")
    opt, upper = dosched.offline_solve(inst)
    assert reward <= dual * (1 + 1e-9)
    assert reward <= upper * (1 + 1e-9)
    print(f"do={reward:.4f} dual={dual:.4f} offline={opt:.4f}")

    try:
        dosched.run(inst, "fifo")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown algorithm accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()
