"""Smoke test for the harqbuf Python extension."""

import csv
import io
import math

import harqbuf


def main():
    cfg = harqbuf.HarqConfig("IR", snr_db=10.0, rate=4.0, c=2.0, trials=20_000, seed=3)
    res = cfg.run()
    assert 0.0 < res.throughput < 4.0, res
    assert len(res.pe) == 10 and all(a >= b for a, b in zip(res.pe, res.pe[1:]))
    assert res.ci95 > 0.0
    print(cfg)
    print(res)

    # Type-I first-attempt failure against the closed form.
    ti = harqbuf.HarqConfig("TI", snr_db=10.0, rate=4.0, c=0.0, trials=50_000, seed=3).run(workers=1)
    p = harqbuf.ti_pe_closed_form(10.0, 4.0, 1)
    se = math.sqrt(p * (1 - p) / ti.trials)
    assert abs(ti.pe[0] - p) <= 4 * se, (ti.pe[0], p)

    gains, mu = harqbuf.waterfill([2.0], 1.0)
    assert abs(gains[0] - 0.5) < 1e-9 and abs(mu - 1 / 3) < 1e-9
    assert harqbuf.stored_rate([4.0, 1.0], [0.75, 0.0]) > 0.0

    wf, ident = harqbuf.mimo_compare(2, 2, snr_db=3.0, rate=5.0, c=5.0, trials=2000)
    assert wf >= ident - 0.05, (wf, ident)

    fbl, delay = harqbuf.fbl_throughput(1000, 400, 20_000, snr_db=5.0, trials=2000)
    assert fbl.throughput > 0.0 and delay >= 400.0

    text = 'kind = "waterfill_demo"\n[params]\neigenvalues = [4, 2, 1]\nbudget = 2\n'
    rows = list(csv.DictReader(io.StringIO(harqbuf.run_spec(text))))
    assert len(rows) == 3 and {r["component"] for r in rows} == {"1", "2", "3"}

    try:
        harqbuf.HarqConfig("IR", snr_db=10.0, rate=-1.0, c=1.0)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("negative rate accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
