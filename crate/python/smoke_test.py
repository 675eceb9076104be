"""Smoke test for the crspec_py extension: build it with maturin, then run
`python python/smoke_test.py`."""

import csv
import io
import json
import math

import crspec_py as cr


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    h = [[1.0 + 0.2j, -0.3 + 0.5j, 0.8 - 0.1j, 0.4 + 0.4j]]
    g = [0.3 - 0.1j, 0.1 + 0.2j, -0.2 + 0.1j, 0.05 - 0.3j]
    cs = cr.ChannelSet(h, [[g]], 10.0, [0.1])

    opt = cr.optimal_covariance(cs)
    closed = cr.closed_form_beamformer(h[0], g, 10.0, 0.1)
    assert close(opt.rate, closed.rate, 1e-5), (opt.rate, closed.rate)
    assert opt.duality_gap is not None and opt.duality_gap <= 1e-4
    assert opt.interference[0] <= 0.1 * (1 + 1e-9)
    ev = opt.eigenvalues
    assert ev[1] <= 1e-6 * ev[0], ev

    free = cr.unconstrained_capacity(cs)
    for r in (cr.dsvd(cs), cr.psvd(cs), cr.white_spectrum(cs), cr.best_hybrid(cs)[1]):
        assert r.rate <= opt.rate + 1e-6 <= free.rate + 2e-6, (r.method, r.rate)

    sigma, nu = cr.standard_wf([2.0, 1.0, 0.25], 3.0)
    assert close(sum(sigma), 3.0, 1e-12)
    sigma, nu, mu = cr.single_cap_wf([2.0, 1.0], [0.5, 0.1], 10.0, 0.5)
    assert 0.5 * sigma[0] + 0.1 * sigma[1] <= 0.5 * (1 + 1e-9)

    assert close(cr.capacity_loss_bound(2, 3, 3.0, 1.0), 4.0, 1e-12)
    loss = cr.capacity_loss_actual([[1.0]], [[1.0]], 1.0, [[1.0]], [[1.0]])
    assert close(loss, 1.0 - math.log2(1.5), 1e-12)

    tones = [([[1.0, 0.5j], [0.2, 1.0]], [[0.3, 0.1]]), ([[0.4, 0.0], [0.1j, 0.9]], [[0.1, 0.2]])]
    rates, power, gap = cr.multitone_optimal(tones, 4.0, 0.1)
    assert close(power, 4.0, 1e-9) and gap <= 1e-4 and len(rates) == 2

    table = cr.run_scenario(json.dumps({"scenario": "fig3", "trials": 2, "pt_grid": [1.0, 100.0]}))
    rows = list(csv.DictReader(io.StringIO(table)))
    assert len(rows) == 10 and rows[0]["scenario"] == "fig3-svd"

    try:
        cr.ChannelSet(h, [[g]], -1.0, [0.1])
    except ValueError:
        pass
    else:
        raise AssertionError("negative budget accepted")

    print(f"ok: rate {opt.rate:.4f} bits, unconstrained {free.rate:.4f} bits, {len(rows)} scenario rows")


if __name__ == "__main__":
    main()
