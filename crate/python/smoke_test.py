"""Smoke test for the qmfilter extension module.

Build and install first, e.g. ``pip install ./crates/python``, then run
``python python/smoke_test.py``.
"""

import math

import qmfilter


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    theta = qmfilter.theta_of(64, 2)
    assert close(theta, math.asin(math.sqrt(2 / 64)), 1e-12)
    assert qmfilter.optimal_k(64, 2) == 4
    assert qmfilter.choose_p(2**17) == 11

    probs = qmfilter.counting_distribution(64, 2, 5)
    assert len(probs) == 32 and close(sum(probs), 1.0, 1e-9)
    assert max(range(32), key=probs.__getitem__) in (2, 30)
    assert qmfilter.estimate_from_b(0, 5, 64) == (0, None)
    r_star, k_star = qmfilter.estimate_from_b(2, 5, 64)
    assert (r_star, k_star) == (2, 4)

    bound, _ = qmfilter.max_fail_bound(1)
    assert close(bound, 0.453, 0.002)

    search = qmfilter.run_search_circuit("000110", 1, shots=256, seed=7)
    expected = qmfilter.p_match(theta, 4)
    assert close(search["success_probability"], expected, 1e-9)
    assert sum(search["counts"].values()) == 256

    count = qmfilter.run_counting_circuit("000110", 1, 5, shots=64, seed=7)
    assert all(close(a, b, 1e-9) for a, b in zip(count["marginal"], probs))

    mc = qmfilter.monte_carlo(2**17, 9, trials=500, seed=1, p=11)
    assert mc["success_rate"] == 1.0 and mc["mean"] < 0.1 * 2**17

    cw = qmfilter.cw_cost()
    assert cw["ell"] == 6 and cw["p"] == 35

    bank = qmfilter.Bank(20, 40, 4, 0, 10, 4, 128, 256, 1.0)
    assert len(bank) == 16
    strain = [2 * x for x in bank.waveform(5)]
    rho = bank.snr(strain, 5)
    assert len(rho) == 256 and max(rho) > 5
    assert 5 in bank.classical_search(strain, 0.9 * max(rho))

    try:
        qmfilter.optimal_k(4, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("r = 0 should be rejected")

    print("qmfilter", qmfilter.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
