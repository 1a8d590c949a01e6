"""Acceptance criteria 1-10, one test each.

Every test carries ``@pytest.mark.criterion(n, title)``; the terminal summary
prints one PASS/FAIL line per criterion (see conftest.py). Criteria 6-8 need
desk-scale training runs that take hours on a CPU; they are built once and
cached by ``acceptance_runs.py``. Set ``XMODAL_ACCEPTANCE_BUILD=0`` to skip
those criteria instead of building missing runs.
"""

from __future__ import annotations

import hashlib
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch
import yaml

import acceptance_runs as runs
from oracles import finite_difference_agreement, raycast_depth
from xmodal.cmwae import build_model
from xmodal.cmwae.losses import loss_mmd, loss_total
from xmodal.config import ArchConfig, SimConfig
from xmodal.corruption import (
    REFERENCE_SIZE,
    S1_BUCKETS,
    assign_s1_levels,
    assign_s2_levels,
    eval_mask,
    make_mask,
    pixels_needed,
    policy_train_mask,
    s1_spec,
    s2_spec,
)
from xmodal.evalbench.recon import RECON_LEVELS
from xmodal.harness.cli import main as cli_main
from xmodal.harness.rng import derive_rng_stream
from xmodal.policy.curriculum import CurriculumState, curriculum_update
from xmodal.policy.network import ActorCritic
from xmodal.policy.ppo import ppo_loss
from xmodal.simkit import RobotState
from xmodal.simkit.camera import Camera
from xmodal.simkit.room import sample_room

TESTS = Path(__file__).resolve().parent
SAMPLES = 10_000


def _elapsed(start: float, record_property) -> float:
    elapsed = time.perf_counter() - start
    record_property("runtime_s", round(elapsed, 1))
    return elapsed


def _heavy(stage_names: list[str]):
    graph = runs.stages()
    missing = [n for n in stage_names if not graph[n].done()]
    if missing and os.environ.get("XMODAL_ACCEPTANCE_BUILD", "1") == "0":
        pytest.skip(f"desk-scale runs not built: {', '.join(missing)} (run tests/acceptance_runs.py)")
    for n in stage_names:
        graph[n].ensure()
    return graph


# ------------------------------------------------------------------ 1


@pytest.mark.criterion(1, "Loss-function unit suite")
def test_criterion_1_unit_examples(record_property):
    files = ["test_cmwae.py", "test_corruption.py", "test_policy.py", "test_evalbench.py"]
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-m", "not slow", *files],
        cwd=TESTS,
        capture_output=True,
        text=True,
    )
    elapsed = _elapsed(start, record_property)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-500:]
    record_property("detail", f"{summary}; {elapsed:.0f} s")
    assert proc.returncode == 0, proc.stdout[-4000:]
    assert elapsed < 60


# ------------------------------------------------------------------ 2


@pytest.mark.criterion(2, "MMD statistical check")
def test_criterion_2_mmd_concentration(record_property):
    start = time.perf_counter()
    values = []
    for seed in range(20):
        g = derive_rng_stream(seed, "acceptance-mmd")
        values.append(loss_mmd(g.standard_normal((1000, 64)), rng=g))
    elapsed = _elapsed(start, record_property)
    worst = max(abs(v) for v in values)
    record_property("detail", f"max |mmd| over 20 seeds = {worst:.5f}; {elapsed:.1f} s")
    assert worst <= 0.01
    assert elapsed < 60


# ------------------------------------------------------------------ 3


def _cmwae_gradient_agreement() -> float:
    arch = ArchConfig.preset("mini")
    torch.manual_seed(11)
    model = build_model(arch).double()
    g = torch.Generator().manual_seed(12)
    gray = torch.rand(6, 16, 16, generator=g, dtype=torch.float64)
    depth = torch.rand(6, 16, 16, generator=g, dtype=torch.float64)
    corrupted = depth * (torch.rand(6, 16, 16, generator=g, dtype=torch.float64) > 0.3)
    prior = torch.randn(6, arch.latent_dim, generator=g, dtype=torch.float64)

    def loss():
        return loss_total(model, gray, corrupted, depth, 10.0, prior=prior).total

    return finite_difference_agreement(loss, list(model.parameters()), 200, np.random.default_rng(13))


def _surrogate_gradient_agreement() -> float:
    torch.manual_seed(21)
    net = ActorCritic(12, hidden_size=8).double()
    g = torch.Generator().manual_seed(22)
    t_len, n = 6, 4
    obs = torch.randn(t_len, n, 12, generator=g, dtype=torch.float64)
    net.update_obs_stats(obs.numpy())
    starts = torch.zeros(t_len, n, dtype=torch.bool)
    starts[0] = True
    starts[3, 2] = True
    h0 = torch.zeros(n, 8, dtype=torch.float64)
    with torch.no_grad():
        mean, _ = net.unroll(obs, h0, starts)
        pre = mean + 0.4 * torch.randn(mean.shape, generator=g, dtype=torch.float64)
        old_logp = net.distribution(mean).log_prob(pre).sum(-1) + 0.05 * torch.randn(t_len, n, generator=g, dtype=torch.float64)
    adv = torch.randn(t_len, n, generator=g, dtype=torch.float64)
    ret = torch.randn(t_len, n, generator=g, dtype=torch.float64)

    def loss():
        return ppo_loss(net, obs, h0, starts, pre, old_logp, adv, ret, 0.2, 0.5, 1e-3)[0]

    return finite_difference_agreement(loss, list(net.parameters()), 200, np.random.default_rng(23))


@pytest.mark.criterion(3, "Gradient checks")
def test_criterion_3_gradient_checks(record_property):
    start = time.perf_counter()
    cm = _cmwae_gradient_agreement()
    ppo = _surrogate_gradient_agreement()
    elapsed = _elapsed(start, record_property)
    record_property("detail", f"agreement CMWAE {cm:.3f}, PPO surrogate {ppo:.3f}; {elapsed:.1f} s")
    assert cm >= 0.95 and ppo >= 0.95
    assert elapsed < 300


# ------------------------------------------------------------------ 4


@pytest.mark.criterion(4, "Raycast oracle equivalence")
def test_criterion_4_raycast_oracle(record_property):
    start = time.perf_counter()
    cfg = SimConfig()
    cam = Camera(cfg, size=16)
    mismatched = []
    for k in range(50):
        g = derive_rng_stream(7, "acceptance-rooms", k)
        room = sample_room(int(g.integers(0, 21)), g, cfg)
        yaw = float(g.uniform(-math.pi, math.pi))
        fast = cam.render(room, RobotState.at_rest([room.start], yaw=yaw)).depth
        slow = raycast_depth(room, room.start, yaw, 16, cfg.hfov_deg, cfg.vfov_deg, cfg.d_max)
        if not np.array_equal(fast, slow):
            mismatched.append(k)
    elapsed = _elapsed(start, record_property)
    record_property("detail", f"{50 - len(mismatched)}/50 rooms identical; {elapsed:.1f} s")
    assert not mismatched
    assert elapsed < 60


# ------------------------------------------------------------------ 5


def _check_masks(name, targets, draw, lo, hi, failures):
    g = derive_rng_stream(0, f"acceptance-masks-{name}")
    n_pix = REFERENCE_SIZE * REFERENCE_SIZE
    sides = []
    for k, target in enumerate(targets):
        m = draw(float(target), g)
        need = pixels_needed(float(target), n_pix)
        covered = int(m.mask.sum())
        # stop rule: the union reaches the target and the last patch was needed to get there
        last = m.patches[-1][2] ** 2 if m.patches else 0
        if covered < need or covered - last >= need:
            failures.append(f"{name} mask {k}: {covered} px for target {need}")
            return
        sides.extend(p[2] for p in m.patches)
    seen = set(np.unique(sides).tolist())
    if seen != set(range(lo, hi + 1)):
        failures.append(f"{name} sides {min(seen)}..{max(seen)} ({len(seen)} values), want {lo}..{hi}")


@pytest.mark.criterion(5, "Corruption protocol fidelity")
def test_criterion_5_corruption_protocol(record_property):
    start = time.perf_counter()
    failures = []

    s1 = assign_s1_levels(SAMPLES, derive_rng_stream(0, "acceptance-s1"))
    for level, pct in S1_BUCKETS:
        count = int(np.sum(s1 == level))
        if count != SAMPLES * pct // 100:
            failures.append(f"S1 bucket {level}: {count} of {SAMPLES}")

    s2 = assign_s2_levels(SAMPLES, derive_rng_stream(0, "acceptance-s2"))
    hit = s2[s2 > 0]
    if int(np.sum(s2 == 0)) != SAMPLES // 2 or hit.min() < 0.20 or hit.max() > 0.50:
        failures.append("S2 pristine half or coverage range")

    R = REFERENCE_SIZE
    eval_targets = np.resize(RECON_LEVELS[1:], SAMPLES)
    _check_masks("S1", s1, lambda t, g: make_mask(s1_spec(t), R, R, g), 50, 100, failures)
    _check_masks("S2", np.resize(hit, SAMPLES), lambda t, g: make_mask(s2_spec(t), R, R, g), 100, 100, failures)
    _check_masks("policy-train", np.full(SAMPLES, 0.5), lambda t, g: policy_train_mask(R, R, g), 1, 30, failures)
    _check_masks("eval", eval_targets, lambda t, g: eval_mask(R, R, t, g), 1, 50, failures)

    elapsed = _elapsed(start, record_property)
    record_property("detail", f"{'all counts match' if not failures else '; '.join(failures)}; {elapsed:.1f} s")
    assert not failures
    assert elapsed < 60


# ------------------------------------------------------------------ 6


def _recon():
    graph = _heavy(["cmwae-s2", "cmwae-s1", "recon-eval"])
    reports = runs.load_recon(graph["recon-eval"])
    return graph, reports


@pytest.mark.criterion(6, "Reconstruction trend at desk scale")
def test_criterion_6_recon_trend(record_property):
    graph, reports = _recon()
    rep = reports["s2"]
    levels = list(rep.levels)
    mse = [rep.mean_mse(lv) for lv in levels]
    ssim = [rep.mean_ssim(lv) for lv in levels]
    runtime = graph["cmwae-s2"].meta()["train_seconds"] + graph["recon-eval"].meta()["eval_seconds"]["s2"]
    record_property("runtime_s", runtime)
    record_property(
        "detail",
        "MSE(x1e-3) " + " ".join(f"{m * 1e3:.3f}" for m in mse)
        + " | SSIM " + " ".join(f"{s:.4f}" for s in ssim)
        + f" | SSIM50/SSIM0 {ssim[-1] / ssim[0]:.3f} | {runtime / 60:.0f} min",
    )
    assert levels == [0.0, 0.2, 0.3, 0.4, 0.5]
    assert all(b >= a for a, b in zip(mse, mse[1:])), "mean MSE must be nondecreasing"
    assert all(b <= a for a, b in zip(ssim, ssim[1:])), "mean SSIM must be nonincreasing"
    assert ssim[-1] >= 0.90 * ssim[0]
    assert runtime <= runs.RECON_BUDGET_S


# ------------------------------------------------------------------ 7


@pytest.mark.criterion(7, "Scheme ordering at desk scale")
def test_criterion_7_scheme_ordering(record_property):
    graph, reports = _recon()
    s2, s1 = reports["s2"], reports["s1"]
    wins = [lv for lv in s2.levels if s2.mean_mse(lv) < s1.mean_mse(lv)]
    runtime = graph["cmwae-s2"].meta()["train_seconds"] + graph["cmwae-s1"].meta()["train_seconds"]
    record_property("runtime_s", runtime)
    record_property(
        "detail",
        "MSE(x1e-3) S2 vs S1: "
        + ", ".join(f"{lv:.0%} {s2.mean_mse(lv) * 1e3:.3f}/{s1.mean_mse(lv) * 1e3:.3f}" for lv in s2.levels)
        + f" | S2 lower at {len(wins)}/5 | {runtime / 60:.0f} min",
    )
    assert len(wins) >= 3
    assert runtime <= runs.SCHEME_BUDGET_S


# ------------------------------------------------------------------ 8


@pytest.mark.criterion(8, "Navigation ordering at desk scale")
def test_criterion_8_navigation_ordering(record_property):
    graph = _heavy(["policy-cmwae", "policy-depthonly", "policy-eval"])
    reports = runs.load_policy_report(graph["policy-eval"])
    cm, ab = reports["cmwae"], reports["depth-only"]
    cm_corr, ab_corr = cm.percentages("corrupted", 0)["success"], ab.percentages("corrupted", 0)["success"]
    cm_clean, ab_clean = cm.percentages("clean", 0)["success"], ab.percentages("clean", 0)["success"]
    partitions = []
    for rep in (cm, ab):
        for cond, lv in rep.cells:
            p = rep.percentages(cond, lv)
            partitions.append(len(rep.cells[(cond, lv)]) == 256 and abs(sum(p.values()) - 100.0) < 1e-9)
    train_s = [graph[n].meta()["wall_seconds"] for n in ("policy-cmwae", "policy-depthonly")]
    record_property("runtime_s", max(train_s))
    record_property(
        "detail",
        f"corrupted L0 success CMWAE {cm_corr:.2f}% vs depth-only {ab_corr:.2f}%; "
        f"clean L0 {cm_clean:.2f}% / {ab_clean:.2f}%; cells partition {sum(partitions)}/{len(partitions)}; "
        f"training {train_s[0] / 60:.0f} + {train_s[1] / 60:.0f} min",
    )
    assert cm_corr - ab_corr >= 20.0, "(a) corrupted level-0 gap below 20 points"
    assert cm_clean > 50.0 and ab_clean > 50.0, "(b) clean level-0 success not above 50% for both"
    assert all(partitions) and len(partitions) == 8, "(c) cells must partition to 100%"
    assert max(train_s) <= runs.POLICY_CAP_S


# ------------------------------------------------------------------ 9


def _cli_run(root: Path, seed: int) -> Path:
    root.mkdir(parents=True)
    cfg = root / "run.yaml"
    cfg.write_text(yaml.safe_dump({"profile": "desk", "dataset": {"count": 400}, "train": {"epochs": 2}}))
    out = root / "out"
    base = ["--config", str(cfg), "--seed", str(seed), "--out", str(out)]
    assert cli_main(["gen-dataset", *base]) == 0
    assert cli_main(["train-cmwae", "--scheme", "s2", *base]) == 0
    assert cli_main(["eval-cmwae", *base]) == 0
    return out


@pytest.mark.criterion(9, "Determinism harness")
def test_criterion_9_determinism(tmp_path, record_property):
    start = time.perf_counter()
    a = _cli_run(tmp_path / "a", 5)
    b = _cli_run(tmp_path / "b", 5)
    csvs = sorted(p.name for p in a.glob("*.csv"))
    same = [n for n in csvs if (a / n).read_bytes() == (b / n).read_bytes()]
    elapsed = _elapsed(start, record_property)
    digest = hashlib.sha256((a / "recon_raw.csv").read_bytes()).hexdigest()[:12]
    record_property("detail", f"{len(same)}/{len(csvs)} CSVs byte-identical (recon_raw {digest}); {elapsed:.0f} s")
    assert "recon_raw.csv" in csvs and "boxplot_stats.csv" in csvs
    assert same == csvs
    assert elapsed < 600


# ------------------------------------------------------------------ 10


def _grid_violations() -> int:
    bad = 0
    rates = np.unique(np.concatenate([np.linspace(0, 1, 201), np.nextafter([0.3, 0.3, 0.7, 0.7], [0, 1, 0, 1])]))
    for level in range(0, 51):
        for rate in rates:
            new = curriculum_update(CurriculumState(level), float(rate)).level
            want = level + 1 if rate > 0.70 else max(level - 1, 0) if rate < 0.30 else level
            bad += new != want
    return bad


@pytest.mark.criterion(10, "Curriculum property suite")
def test_criterion_10_curriculum(record_property):
    start = time.perf_counter()
    assert curriculum_update(CurriculumState(3), 0.75).level == 4
    assert curriculum_update(CurriculumState(3), 0.25).level == 2
    assert curriculum_update(CurriculumState(0), 0.10).level == 0
    assert curriculum_update(CurriculumState(3), 0.70).level == 3
    assert curriculum_update(CurriculumState(3), 0.30).level == 3
    bad = _grid_violations()
    elapsed = _elapsed(start, record_property)
    record_property("detail", f"boundary examples and {bad} violations on a 51 x 205 level/rate grid; {elapsed:.2f} s")
    assert bad == 0
    assert elapsed < 1.0
