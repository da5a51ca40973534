import csv
import json
import math

import numpy as np
import pytest

from sparse_stap.detector import DetectorConfig
from sparse_stap.harness import (ExperimentSpec, Pipeline, SpecError, TargetSpec, clopper_pearson,
                                 h0_statistics, load_spec, preset, roc_points, run_calibration,
                                 run_pd_vs_snr, run_profile_experiment, run_roc, run_timing,
                                 save_records, save_spec, trial_seed, TrialRecord, write_manifest)
from sparse_stap.scene import SPEED_OF_LIGHT, RadarConfig
from sparse_stap.solver import SolverParams


def tiny_spec(**kw):
    base = dict(radar=RadarConfig(num_elements=4, num_pulses=4, cnr_db=10.0),
                rho_s=2.0, rho_d=2.0, solver=SolverParams(data_scale=10.0, max_iter=60),
                detector=DetectorConfig(num_secondary=4), num_trials=6, calibration_trials=20,
                error_cases=((0.1, 0.1 * math.pi),), targets=(TargetSpec(0.36, 0.0, 10.0),),
                snr_grid=(0.0, 40.0), pfa=0.1)
    base.update(kw)
    return ExperimentSpec(**base)


def test_spec_roundtrip(tmp_path):
    spec = tiny_spec(base_seed=9)
    path = tmp_path / "s.json"
    save_spec(spec, path)
    assert load_spec(path) == spec
    assert ExperimentSpec.from_dict(json.loads(spec.to_json())).digest() == spec.digest()


def test_spec_errors(tmp_path):
    with pytest.raises(SpecError, match="unknown spec field"):
        ExperimentSpec.from_dict({"num_trails": 3})
    with pytest.raises(SpecError, match="normalized_doppler"):
        ExperimentSpec.from_dict({"targets": [{"snr_db": 1.0}]})
    with pytest.raises(SpecError, match="unknown RadarConfig"):
        ExperimentSpec.from_dict({"radar": {"num_elemnts": 3}})
    with pytest.raises(SpecError, match="not found"):
        load_spec(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SpecError, match="malformed"):
        load_spec(bad)
    with pytest.raises(SpecError, match="nonempty"):
        ExperimentSpec(algorithms=())
    with pytest.raises(SpecError):
        ExperimentSpec(algorithms=("omp",))
    with pytest.raises(SpecError):
        ExperimentSpec(num_trials=0)
    with pytest.raises(SpecError):
        ExperimentSpec(rho_s=2.3)


def test_overrides():
    spec = ExperimentSpec().with_overrides(["solver.beta=0.2", "detector.num_secondary=4",
                                           "algorithms=[\"jie-adm\"]"])
    assert spec.solver.beta == 0.2
    assert spec.detector.num_secondary == 4
    assert spec.algorithms == ("jie-adm",)
    for bad in ("solver.betaa=1", "nope=1", "solver=3", "solver.beta"):
        with pytest.raises(SpecError):
            ExperimentSpec().with_overrides([bad])


def test_default_physics_and_full_preset():
    spec = ExperimentSpec()
    r = spec.radar
    assert r.carrier_wavelength == pytest.approx(SPEED_OF_LIGHT / 1.24e9)
    assert r.element_spacing == pytest.approx(r.carrier_wavelength / 2)
    assert (r.prf, r.platform_velocity, r.platform_height) == (1984.0, 100.0, 3000.0)
    assert (r.num_elements, spec.rho_s, spec.pfa) == (8, 3.0, 1e-2)
    full = preset("full")
    assert full.radar == RadarConfig(cnr_db=full.radar.cnr_db)
    # 30 dB of clutter summed over the 361 patches
    total = 10 * np.log10(r.num_clutter_patches * 10 ** (r.cnr_db / 10))
    assert total == pytest.approx(30.0)
    assert full.radar.cnr_db == r.cnr_db
    assert (full.rho_s, full.rho_d, full.pfa) == (5.0, 5.0, 1e-3)
    assert (full.solver.beta, full.solver.rho, full.solver.zeta, full.solver.max_iter) == (0.1, 0.01, 1e-4, 500)
    assert len(full.error_cases) == 6


def test_presets_match_shipped_files():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "presets"
    for name in ("fig3", "fig5", "roc", "full", "desk"):
        assert load_spec(root / f"{name}.json") == preset(name)
    fig3 = preset("fig3")
    assert [(t.normalized_doppler, t.snr_db) for t in fig3.targets] == [(-0.13, 0.2), (0.11, -3.8), (0.41, -3.8)]
    with pytest.raises(SpecError):
        preset("fig9")


def test_trial_seed_depends_only_on_its_key():
    a = trial_seed(1, "h1", 0, 5).generate_state(4)
    assert np.array_equal(a, trial_seed(1, "h1", 0, 5).generate_state(4))
    for other in (trial_seed(2, "h1", 0, 5), trial_seed(1, "h0", 0, 5), trial_seed(1, "h1", 1, 5),
                  trial_seed(1, "h1", 0, 6)):
        assert not np.array_equal(a, other.generate_state(4))


def test_common_random_numbers_across_algorithms_and_snr():
    pipe_all = Pipeline(tiny_spec())
    pipe_one = Pipeline(tiny_spec(algorithms=("admt",)))
    full = pipe_all.run_trial("h1", 0, 3, pipe_all.spec.targets)
    alone = pipe_one.run_trial("h1", 0, 3, pipe_one.spec.targets)
    np.testing.assert_array_equal(full["admt"][0], alone["admt"][0])
    gp, bg, seq = pipe_all.realization("h1", 0, 3)
    lo = pipe_all.add_targets(bg, gp, (TargetSpec(0.36, 0, 0.0),), seq)
    hi = pipe_all.add_targets(bg, gp, (TargetSpec(0.36, 0, 20.0),), seq)
    np.testing.assert_array_equal(lo[:, 1:], hi[:, 1:])
    np.testing.assert_allclose(hi[:, 0] - bg[:, 0], 10 * (lo[:, 0] - bg[:, 0]))


def test_targets_are_snapped():
    pipe = Pipeline(tiny_spec())
    assert pipe.place(TargetSpec(0.36, 0.01, 0)).normalized_doppler == 0.375
    pipe = Pipeline(tiny_spec(snap_targets=False))
    assert pipe.place(TargetSpec(0.36, 0.01, 0)).normalized_doppler == 0.36


def test_separate_snapshot_option():
    pipe = Pipeline(tiny_spec(joint_secondaries=False, algorithms=("jie-adm",)))
    out = pipe.run_trial("h0", 0, 0)
    assert out["jie-adm"][0].shape == (pipe.grid.n_d,)


def test_pd_curve_csv_and_reproducibility(tmp_path):
    spec = tiny_spec()
    rows = run_pd_vs_snr(spec, out_dir=tmp_path / "a", allow_few_trials=True)
    run_pd_vs_snr(spec, out_dir=tmp_path / "b", allow_few_trials=True)
    a = (tmp_path / "a" / "pd_curve.csv").read_bytes()
    assert a == (tmp_path / "b" / "pd_curve.csv").read_bytes()
    with open(tmp_path / "a" / "pd_curve.csv") as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == ["snr_db", "case", "algorithm", "pd", "ci_lo", "ci_hi", "trials"]
    assert len(table) == 2 * 3
    assert all(int(r["trials"]) == 6 for r in table)
    for r in rows:
        assert r["ci_lo"] <= r["pd"] <= r["ci_hi"]


def test_pd_saturates_at_high_snr():
    # desk-size array: at 4x4 most secondary windows are empty and thresholds go infinite
    spec = tiny_spec(radar=RadarConfig(num_elements=8, num_pulses=8, cnr_db=4.4), rho_s=3.0, rho_d=3.0,
                     solver=SolverParams(data_scale=10.0, max_iter=150),
                     detector=DetectorConfig(num_secondary=10), num_trials=5, calibration_trials=20,
                     snr_grid=(40.0,))
    with pytest.warns(RuntimeWarning, match="unstable"):
        rows = run_pd_vs_snr(spec, write=False, allow_few_trials=True)
    assert all(np.isfinite(r["threshold_db"]) for r in rows)
    assert all(r["pd"] == 1.0 for r in rows)


def test_pd_curve_refuses_few_trials():
    with pytest.raises(SpecError, match="minimum"):
        run_pd_vs_snr(tiny_spec(), write=False)


def test_roc(tmp_path):
    spec = tiny_spec(algorithms=("jie-adm",), targets=(TargetSpec(0.13, 0, 5.0), TargetSpec(0.36, 0, 5.0)),
                     pfa_grid=(0.1, 0.3, 0.6, 1.0))
    rows = run_roc(spec, out_dir=tmp_path, allow_few_trials=True)
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "pfa,pd,doppler,algorithm"
    for dop in (0.13, 0.36):
        pts = [r for r in rows if r["doppler"] == dop]
        pds = [r["pd"] for r in pts]
        assert pds == sorted(pds)
        assert pts[-1]["pfa"] == 1.0 and pts[-1]["pd"] == 1.0


def test_roc_points_monotone(rng):
    h0 = rng.standard_normal(500)
    h1 = rng.standard_normal(300) + 1
    pts = roc_points(h0, h1, (0.02, 0.05, 0.1, 0.5, 1.0))
    assert [p for p, _ in pts] == [0.02, 0.05, 0.1, 0.5, 1.0]
    pds = [d for _, d in pts]
    assert pds == sorted(pds) and pds[-1] == 1.0


def test_timing_rows(tmp_path):
    spec = tiny_spec(timing_sizes=(2, 3), timing_rho=2.0, timing_iterations=5, timing_repeats=2)
    rows = run_timing(spec, tmp_path)
    header = (tmp_path / "timing.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["columns", "algorithm", "mean_ms", "std_ms"]
    assert sorted({r["columns"] for r in rows}) == [16, 36]
    assert all(r["mean_ms"] > 0 and r["std_ms"] >= 0 for r in rows)


def test_timing_column_range_default():
    spec = ExperimentSpec()
    cols = [int((spec.timing_rho * s) ** 2) for s in spec.timing_sizes]
    assert cols[0] == 400 and cols[-1] == 3600


def test_profile_experiment(tmp_path):
    spec = tiny_spec(error_cases=((0.0, 0.0), (0.1, 0.1 * math.pi)))
    profiles = run_profile_experiment(spec, tmp_path)
    files = sorted(p.name for p in tmp_path.glob("profile_*.csv"))
    assert len(files) == 6
    n_rows = len((tmp_path / files[0]).read_text().splitlines()) - 1
    assert n_rows == Pipeline(spec).grid.size
    assert set(profiles) == {(c, a) for c in (0, 1) for a in spec.algorithms}


def test_calibration_and_manifest(tmp_path):
    spec = tiny_spec(algorithms=("adm",))
    res = run_calibration(spec, tmp_path)
    saved = json.loads((tmp_path / "threshold.json").read_text())
    assert saved["thresholds"][0]["threshold_db"] == res["thresholds"][0]["threshold_db"]
    path = write_manifest(tmp_path, spec, "calibrate-threshold")
    man = json.loads(path.read_text())
    assert man["spec_sha256"] == spec.digest()
    assert ExperimentSpec.from_dict(man["spec"]) == spec
    assert {"numpy", "scipy", "sparse_stap"} <= set(man["versions"])


def test_h0_statistics_shape_and_parallel_agreement():
    spec = tiny_spec(algorithms=("adm",))
    pipe = Pipeline(spec)
    serial = h0_statistics(pipe, 0, 4)
    pooled = h0_statistics(pipe, 0, 4, workers=2)
    assert serial["adm"].shape == (4, pipe.grid.n_d)
    np.testing.assert_array_equal(serial["adm"], pooled["adm"])


def test_clopper_pearson():
    lo, hi = clopper_pearson(0, 10)
    assert lo == 0 and 0.25 < hi < 0.35
    lo, hi = clopper_pearson(10, 10)
    assert hi == 1 and 0.65 < lo < 0.75


def test_save_records(tmp_path):
    rec = TrialRecord(0, [1, 2], "jie-adm", 0, [True], [3.5], 120, 0.25)
    save_records([rec], tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())[0]["iterations"] == 120
