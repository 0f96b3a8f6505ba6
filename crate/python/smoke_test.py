"""Smoke test for the pyvarint extension module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""
import math
import tempfile

import pyvarint


def main():
    q, p, h = pyvarint.kepler_state(0.7)
    assert abs(h + 0.5) < 1e-14, h
    assert abs(q[0] - 0.3) < 1e-15

    run = pyvarint.epavi(0.7, h0=0.001)
    print(run)
    assert run.max_energy_error < 1e-12
    assert abs(run.mean_ratio - 6.22) < 0.1
    assert run.t[-1] >= 2 * math.pi
    assert len(run) == len(run.h) + 1

    dd = pyvarint.epavi(0.7, h0=0.01, digits=20)
    assert dd.max_energy_error < 1e-16, dd.max_energy_error

    for monitor in ("g1", "g2"):
        a = pyvarint.avi(0.1, monitor=monitor)
        print(monitor, a)
        assert 1e-8 <= a.max_energy_error <= 1e-6
        assert a.angular_momentum_drift < 1e-9

    slope = pyvarint.bea_slope("oscillator", modified=True)
    print("modified-equation residual slope", slope)
    assert abs(slope - 5.0) < 0.3

    with tempfile.TemporaryDirectory() as out:
        summary = pyvarint.run_config({"e": "0.1", "integrator": "avi2", "h0": "0.01", "out": out})
        assert summary["status"] == "ok", summary

    try:
        pyvarint.avi(0.7, monitor="g9")
    except ValueError:
        pass
    else:
        raise AssertionError("bad monitor accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
