import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from stemseg import studies
from stemseg.cli import main
from stemseg.denoise import NlmParams
from stemseg.evaluate import PipelineSettings, run_once
from stemseg.imagecore import load_labels, save_image, save_labels
from stemseg.pipeline import ConfigError, PipelineConfig, load_config, run_pipeline
from stemseg.scenesim import ParticleSampler, SceneSpec

SMALL = ["--width", "160", "--height", "160", "--count", "3", "--size-mean", "40", "--size-std", "2"]


def _json(path):
    return json.loads(path.read_text())


# --- pipeline library -----------------------------------------------------------

def test_config_from_dict_variants(tmp_path):
    (tmp_path / "scene.json").write_text(json.dumps(SceneSpec(seed=4).to_dict()))
    cfg = PipelineConfig.from_dict({"scene_file": "scene.json", "min_area": 100,
                                    "denoiser": {"type": "nlm"}}, tmp_path)
    assert cfg.scene.seed == 4 and cfg.settings.min_area == 100
    assert cfg.settings.denoiser == NlmParams()
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"scene_file": "missing.json"}, tmp_path)
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"scene": {"width": -1}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"threshold": "otsu", "bogus": 1})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_run_pipeline_writes_artifacts(tmp_path):
    spec = SceneSpec(seed=2, width=160, height=160, target_snr=12.0,
                     particles=ParticleSampler(count=3, size_mean=40))
    rep = run_pipeline(PipelineConfig(spec, PipelineSettings(), tmp_path / "out"))
    out = tmp_path / "out"
    names = {"clean.png", "noisy.png", "denoised.png", "truth_labels.png", "pred_labels.png",
             "instances.json", "report.json", "scene.json", "size_hist.csv", "size_hist.svg",
             "intensity_hist.csv", "manifest.json"}
    assert names <= {p.name for p in out.iterdir()}
    report = _json(out / "report.json")
    assert report["schema_version"] == 1 and report["recall"] == rep.recall
    assert report["provenance"]["seed"] == 2
    assert report["provenance"]["config"]["scene"]["seed"] == 2
    for png in ("clean.png", "noisy.png", "denoised.png", "truth_labels.png", "pred_labels.png"):
        prov = json.loads(Image.open(out / png).text["provenance"])
        assert prov["tool"] == "stemseg" and prov["seed"] == 2
    assert (out / "size_hist.csv").read_text().startswith("bin_start,bin_end,count\n")
    assert set(_json(out / "manifest.json")["artifacts"]) == names - {"manifest.json"}


def test_provenance_regenerates_identically(tmp_path):
    spec = SceneSpec(seed=8, width=128, height=128, target_snr=9.0,
                     particles=ParticleSampler(count=2, size_mean=30))
    run_pipeline(PipelineConfig(spec, PipelineSettings(min_area=100), tmp_path / "a"))
    prov = _json(tmp_path / "a" / "report.json")["provenance"]
    cfg2 = PipelineConfig.from_dict(prov["config"], output_dir=tmp_path / "b")
    run_pipeline(cfg2)
    for name in ("noisy.png", "pred_labels.png", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_noise_free_pipeline_full_recall(tmp_path):
    rep = run_pipeline(PipelineConfig(studies.noise_scene(), PipelineSettings(), tmp_path))
    assert rep.recall == 1.0


def test_nlm_detects_at_least_as_many_as_raw():
    spec = studies.noise_scene(studies.GOLDEN_SEED, 7.4870)
    raw = run_once(spec, PipelineSettings()).report
    nlm = run_once(spec, PipelineSettings(denoiser=NlmParams())).report
    assert nlm.tp >= raw.tp


# --- CLI --------------------------------------------------------------------------

def test_invalid_scene_file_is_config_error(tmp_path):
    bad = tmp_path / "scene.json"
    bad.write_text(json.dumps({"width": 0}))
    out = tmp_path / "out"
    assert main(["pipeline", "--scene", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["pipeline", "--scene", str(tmp_path / "nope.json"), "--out", str(out)]) == 2
    assert main(["simulate", "--out", str(out), "--width", "-3"]) == 2
    assert main(["pipeline", "--denoiser", "wavelet"]) == 2


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["pipeline", "--config", str(tmp_path / "none.json")]) == 2


def test_stage_error_exit_code(tmp_path, capsys):
    # 20 large particles cannot fit in 64x64: placement fails inside the simulate stage
    rc = main(["pipeline", "--out", str(tmp_path / "o"), "--width", "64", "--height", "64",
               "--count", "20", "--size-mean", "30", "--size-std", "0"])
    assert rc == 3
    assert "simulate" in capsys.readouterr().err


def test_unreadable_input_is_stage_error(tmp_path):
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"garbage")
    assert main(["denoise", str(junk), str(tmp_path / "o.png")]) == 3


def test_config_then_flags_precedence(tmp_path):
    cfg = {"scene": SceneSpec(seed=1, width=128, height=128,
                              particles=ParticleSampler(count=2, size_mean=30)).to_dict(),
           "min_area": 100, "denoiser": {"type": "gaussian", "sigma": 2.0, "kernel": [3, 3]}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["pipeline", "--config", str(path), "--out", str(out), "--seed", "5",
                 "--sigma", "1.5", "--min-area", "50"]) == 0
    rep = _json(out / "report.json")["config"]
    assert rep["seed"] == 5
    assert rep["min_area"] == 50
    assert rep["denoiser"] == {"type": "gaussian", "sigma": 1.5, "kernel": [3, 3]}


def test_simulate_segment_evaluate_chain(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--out", str(sim), "--seed", "3", "--snr", "12", *SMALL]) == 0
    sidecar = _json(sim / "scene.json")
    assert sidecar["schema_version"] == 1 and sidecar["noise"]["sigma_gaussian"] > 0
    den = tmp_path / "den.png"
    assert main(["denoise", str(sim / "noisy.png"), str(den), "--method", "nlm",
                 "--patch-radius", "2", "--search-radius", "5", "--report", str(tmp_path / "d.json")]) == 0
    echo = _json(tmp_path / "d.json")["denoiser"]
    assert echo["patch_radius"] == 2 and echo["resolved"]["h"] == pytest.approx(0.8 * echo["resolved"]["sigma"])
    pred = tmp_path / "pred.png"
    assert main(["segment", str(den), str(pred), "--instances", str(tmp_path / "i.json")]) == 0
    inst = _json(tmp_path / "i.json")
    assert inst["min_area"] == 500 and len(inst["instances"]) == load_labels(pred).max()
    rep = tmp_path / "rep.json"
    assert main(["evaluate", "--truth", str(sim / "truth_labels.png"), "--pred", str(pred),
                 "--output", str(rep), "--plots"]) == 0
    assert _json(rep)["recall"] == 1.0
    assert (tmp_path / "rep_sizes.csv").exists() and (tmp_path / "rep_sizes.svg").exists()


def test_hist_command(tmp_path, capsys):
    img = tmp_path / "x.png"
    save_image(np.full((4, 4), 1.0), img, depth=8)
    assert main(["hist", str(img)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "bin,count" and lines[-1] == "255,16" and len(lines) == 257


def test_validate_masks(tmp_path):
    good = tmp_path / "good.png"
    save_labels(np.array([[0, 1], [2, 2]]), good)
    bad = tmp_path / "bad.png"
    Image.fromarray(np.array([[0, 4], [9, 9]], dtype=np.uint16)).save(bad)
    rgb = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(rgb)
    assert main(["validate-masks", str(good)]) == 0
    assert main(["validate-masks", str(good), str(bad)]) == 4
    assert main(["validate-masks", str(rgb)]) == 4
    fixed = tmp_path / "fixed"
    assert main(["validate-masks", str(bad), "--fix-dir", str(fixed)]) == 0
    assert np.array_equal(load_labels(fixed / "bad.png"), [[0, 1], [2, 2]])


def test_evaluate_rejects_non_compact_without_flag(tmp_path):
    t = tmp_path / "t.png"
    save_labels(np.array([[0, 1], [0, 0]]), t)
    p = tmp_path / "p.png"
    Image.fromarray(np.array([[0, 3], [0, 0]], dtype=np.uint16)).save(p)
    assert main(["evaluate", "--truth", str(t), "--pred", str(p)]) == 3
    assert main(["evaluate", "--truth", str(t), "--pred", str(p), "--compact"]) == 0


@pytest.mark.parametrize("workers", ["1", "2"])
def test_sweep_custom_snr(tmp_path, workers):
    out = tmp_path / "sw"
    assert main(["sweep", "--study", "snr", "--snr-list", "inf,10,6", "--seed", "2",
                 "--workers", workers, "--out", str(out), *SMALL]) == 0
    doc = _json(out / "sweep.json")
    assert doc["schema_version"] == 1
    assert [r["condition"] for r in doc["runs"]] == [None, 10.0, 6.0]
    assert (out / "sweep.svg").exists()


def test_sweep_worker_count_does_not_change_results(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["sweep", "--study", "snr", "--snr-list", "inf,8", "--seed", "4", *SMALL]
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b), "--workers", "2"]) == 0
    assert (a / "sweep.json").read_bytes() == (b / "sweep.json").read_bytes()


def test_sweep_snr_needs_list(tmp_path):
    assert main(["sweep", "--study", "snr", "--out", str(tmp_path)]) == 2


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "stemseg.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "stemseg" in out.stdout
