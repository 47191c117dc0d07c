"""Experiment runner: train the federated protocols on configured datasets
and emit metrics tables, residual traces, and leakage reports."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from fedkrls.attacks import ALGORITHMS, leakage_report, write_leakage_csv
from fedkrls.config import ConfigError, RunConfig, load_config
from fedkrls.data import Dataset, DataError, load_csv, make_toy, normalize_train_test, partition, stratified_split
from fedkrls.federation.actors import predict, run_fedcg, run_naive
from fedkrls.federation.transcript import Transcript
from fedkrls.kernel import KernelSpec, rbf_block
from fedkrls.landmarks import SharedSeed, random_widths, sample_landmarks
from fedkrls.metrics import MetricsRow, RepeatResult, accuracy, precision, recall
from fedkrls.solver import solve_krls_cg
from fedkrls.topology import even_topology

# name -> (file stem, positive class).  sonar/ionosphere are drop-ins: place
# a matching CSV (feature columns then a 'label' column) in the data dir.
DATASET_REGISTRY = {
    "iris": ("iris.csv", "setosa"),
    "wine": ("wine.csv", "class_0"),
    "breast_cancer": ("breast_cancer.csv", "malignant"),
    "sonar": ("sonar.csv", "mine"),
    "ionosphere": ("ionosphere.csv", "good"),
}


@dataclass
class Experiment:
    """A resolved experiment: splits, topology, and base seed."""

    cfg: RunConfig
    train: Dataset
    test: Dataset
    base_seed: SharedSeed

    @property
    def gamma(self) -> float:
        return self.cfg.gamma if self.cfg.gamma > 0 else 1.0 / self.train.d


def prepare(cfg: RunConfig, data_dir) -> Experiment:
    base = SharedSeed(cfg.seed)
    if cfg.dataset == "toy":
        train, test, _ = make_toy(cfg.toy_n_train, cfg.toy_n_test, cfg.n_hospitals, base)
        return Experiment(cfg, train, test, base)
    if cfg.dataset not in DATASET_REGISTRY:
        raise ConfigError(f"unknown dataset {cfg.dataset!r}; known: toy, {', '.join(DATASET_REGISTRY)}")
    stem, positive = DATASET_REGISTRY[cfg.dataset]
    path = Path(data_dir) / stem
    if not path.exists():
        raise DataError(
            f"dataset file {path} is missing; iris/wine/breast_cancer ship with the "
            f"repository, sonar/ionosphere must be dropped in manually"
        )
    ds = load_csv(path, "label", positive)
    train, test = stratified_split(ds, cfg.test_fraction, base)
    train, test = normalize_train_test(train, test)
    return Experiment(cfg, train, test, base)


def _kernel_spec(exp: Experiment, rep_seed: SharedSeed) -> KernelSpec:
    if exp.cfg.random_gamma:
        return KernelSpec.per_landmark(random_widths(rep_seed.derive("gamma"), exp.cfg.m, exp.gamma))
    return KernelSpec.shared(exp.gamma)


def _sampler_stats(sampler: str, train: Dataset):
    if sampler == "P":
        return train.X
    if sampler == "U":
        return train.d
    return (train.X.mean(axis=0), train.X.std(axis=0))


def run_one_repeat(exp: Experiment, rep: int, seed_regime: str, transcript: Transcript | None = None):
    """One train/evaluate cycle; returns (RepeatResult, trace)."""
    cfg = exp.cfg
    base = exp.base_seed
    if seed_regime == "alpha":
        lm_seed = base.derive("landmarks")
        a0_seed = base.derive(f"alpha0/{rep}")
    elif seed_regime == "landmarks":
        lm_seed = base.derive(f"landmarks/{rep}")
        a0_seed = base.derive("alpha0")
    else:
        raise ConfigError(f"unknown seed regime {seed_regime!r}")
    landmarks = sample_landmarks(cfg.sampler, cfg.m, _sampler_stats(cfg.sampler, exp.train), lm_seed)
    spec = _kernel_spec(exp, lm_seed)
    alpha0 = a0_seed.generator().standard_normal(cfg.m)
    n_h = 1 if cfg.protocol == "cencg" else cfg.n_hospitals
    n_p = min(cfg.n_providers, exp.train.d)
    topo = even_topology(exp.train.ids, exp.train.d, n_h, n_p)
    part = partition(exp.train, topo)
    run_seed = base.derive(f"protocol/{rep}")
    t0 = time.perf_counter()
    if cfg.protocol == "naive":
        result = run_naive(part, landmarks, spec, cfg.lam, run_seed, alpha0, cfg.toll, cfg.max_epochs,
                           transport=cfg.transport, transcript=transcript)
    else:
        result = run_fedcg(part, landmarks, spec, cfg.lam, run_seed, alpha0, cfg.toll, cfg.max_epochs,
                           transport=cfg.transport, transcript=transcript)
    train_time = time.perf_counter() - t0
    _, y_hat = predict(result.alpha, exp.test.X, landmarks, spec)
    rr = RepeatResult(
        stop_epoch=result.trace.stop_epoch,
        train_time=train_time,
        accuracy=accuracy(exp.test.y, y_hat),
        recall=recall(exp.test.y, y_hat),
        precision=precision(exp.test.y, y_hat),
    )
    return rr, result.trace


def run_experiment(exp: Experiment, seed_regime: str, parallel: bool = False):
    """All repeats; returns (MetricsRow, per-repeat traces, first transcript)."""
    cfg = exp.cfg
    transcript = Transcript()

    def one(rep: int):
        return run_one_repeat(exp, rep, seed_regime, transcript if rep == 0 else None)

    if parallel and cfg.repeats > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.repeats, 4)) as pool:
            outcomes = list(pool.map(one, range(cfg.repeats)))
    else:
        outcomes = [one(rep) for rep in range(cfg.repeats)]
    repeats = [rr for rr, _ in outcomes]
    traces = [tr for _, tr in outcomes]
    return MetricsRow.aggregate(cfg.protocol, repeats), traces, transcript


def krls_baseline(exp: Experiment, seed_regime: str) -> MetricsRow:
    """Full-kernel KRLS solved by CG on the n x n Gram matrix."""
    cfg = exp.cfg
    spec = KernelSpec.shared(exp.gamma)
    K = rbf_block(exp.train.X, exp.train.X, spec).values
    t0 = time.perf_counter()
    alpha, trace = solve_krls_cg(K, exp.train.y, cfg.lam, cfg.toll, cfg.max_epochs)
    train_time = time.perf_counter() - t0
    scores = rbf_block(exp.test.X, exp.train.X, spec).values @ alpha
    y_hat = np.where(scores >= 0, 1.0, -1.0)
    # deterministic (fixed zero start), so a single solve stands in for all repeats
    rr = RepeatResult(trace.stop_epoch, train_time,
                      accuracy(exp.test.y, y_hat), recall(exp.test.y, y_hat),
                      precision(exp.test.y, y_hat))
    return MetricsRow.aggregate("krls_cg", [rr])


METRIC_COLUMNS = [
    "dataset", "protocol", "sampler", "m", "seed_regime", "repeats",
    "stop_epoch_mean", "stop_epoch_2std",
    "accuracy_mean", "accuracy_2std", "recall_mean", "recall_2std",
    "precision_mean", "precision_2std", "train_time_s",
]


def _metric_values(cfg: RunConfig, row: MetricsRow, seed_regime: str, m: int | None = None):
    return [
        cfg.dataset, row.protocol, cfg.sampler, cfg.m if m is None else m, seed_regime, row.n_repeats,
        f"{row.stop_epoch_mean:.6g}", f"{row.stop_epoch_2std:.6g}",
        f"{row.accuracy_mean:.6g}", f"{row.accuracy_2std:.6g}",
        f"{row.recall_mean:.6g}", f"{row.recall_2std:.6g}",
        f"{row.precision_mean:.6g}", f"{row.precision_2std:.6g}",
        f"{row.train_time_mean:.4f}",
    ]


def write_metrics_csv(path, cfg: RunConfig, rows, seed_regime: str) -> None:
    """rows: list of (MetricsRow, m) pairs; config echoed as comments."""
    with open(path, "w", newline="") as fh:
        for key, value in cfg.echo_items():
            fh.write(f"# {key} = {value}\n")
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for row, m in rows:
            w.writerow(_metric_values(cfg, row, seed_regime, m))


def write_residuals_csv(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["repeat", "epoch", "residual"])
        for rep, trace in enumerate(traces):
            for epoch, err, _, _ in trace.records:
                w.writerow([rep, epoch, f"{err:.12e}"])


def print_table(rows, seed_regime: str, cfg: RunConfig) -> None:
    header = ["protocol", "m", "stop epoch", "accuracy", "recall", "precision", "time s"]
    lines = [header]
    for row, m in rows:
        lines.append([
            row.protocol, str(m),
            f"{row.stop_epoch_mean:.2f} ± {row.stop_epoch_2std:.2f}",
            f"{row.accuracy_mean:.3f} ± {row.accuracy_2std:.3f}",
            f"{row.recall_mean:.3f} ± {row.recall_2std:.3f}",
            f"{row.precision_mean:.3f} ± {row.precision_2std:.3f}",
            f"{row.train_time_mean:.3f}",
        ])
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    for line in lines:
        print("  ".join(cell.ljust(w) for cell, w in zip(line, widths)))


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = prepare(cfg, args.data_dir)
    row, traces, transcript = run_experiment(exp, args.seed_regime, args.parallel_repeats)
    write_metrics_csv(out / "metrics.csv", cfg, [(row, cfg.m)], args.seed_regime)
    run_name = f"{cfg.dataset}_{cfg.protocol}"
    write_residuals_csv(out / f"residuals_{run_name}.csv", traces)
    transcript.write(out / "transcript.log")
    print_table([(row, cfg.m)], args.seed_regime, cfg)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    m_grid = cfg.m_grid or (cfg.m,)
    samplers = cfg.samplers or (cfg.sampler,)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    all_traces = {}
    transcript = None
    for sampler in samplers:
        for m in m_grid:
            cell = replace(cfg, sampler=sampler, m=m)
            exp = prepare(cell, args.data_dir)
            row, traces, tr = run_experiment(exp, args.seed_regime, args.parallel_repeats)
            rows.append((row, m))
            all_traces[f"{cfg.dataset}_{cfg.protocol}_{sampler}_m{m}"] = traces
            transcript = transcript or tr
    baseline_exp = prepare(cfg, args.data_dir)
    rows.append((krls_baseline(baseline_exp, args.seed_regime), baseline_exp.train.n))
    write_metrics_csv(out / "metrics.csv", cfg, rows, args.seed_regime)
    for run_name, traces in all_traces.items():
        write_residuals_csv(out / f"residuals_{run_name}.csv", traces)
    if transcript is not None:
        transcript.write(out / "transcript.log")
    print_table(rows, args.seed_regime, cfg)
    return 0


def cmd_attack(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = prepare(cfg, args.data_dir)
    n = min(cfg.attack_n_samples, exp.train.n)
    X = exp.train.X[:n]
    rows = leakage_report(
        cfg.dataset, X, cfg.sampler,
        cfg.m_grid or (cfg.m,),
        algorithms=cfg.attack_algorithms or tuple(ALGORITHMS),
        seeds=cfg.attack_seeds,
        gamma=exp.gamma,
        per_landmark_gamma=cfg.random_gamma,
    )
    write_leakage_csv(rows, out / "leakage.csv")
    for r in rows:
        rel = r.rel_error if isinstance(r.rel_error, str) else f"{r.rel_error:.3e}"
        print(f"{r.dataset:>14} {r.sampler} m={r.m:<4d} {r.algorithm:<22} seed={r.seed} rel_error={rel}")
    return 0


def cmd_toy(args) -> int:
    cfg = RunConfig(
        dataset="toy", protocol=args.protocol, sampler=args.sampler, m=args.m,
        lam=args.lam, gamma=args.gamma, toll=args.toll, n_hospitals=args.n_hospitals,
        n_providers=args.n_providers, seed=args.seed, repeats=args.repeats,
        toy_n_train=args.n, toy_n_test=args.n_test,
    )
    cfg.validate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = prepare(cfg, args.data_dir)
    row, traces, transcript = run_experiment(exp, args.seed_regime, args.parallel_repeats)
    write_metrics_csv(out / "metrics.csv", cfg, [(row, cfg.m)], args.seed_regime)
    write_residuals_csv(out / f"residuals_toy_{cfg.protocol}.csv", traces)
    transcript.write(out / "transcript.log")
    print_table([(row, cfg.m)], args.seed_regime, cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedkrls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default="out", help="artifact directory")
        p.add_argument("--data-dir", default="data", help="directory holding the dataset CSVs")
        p.add_argument("--seed-regime", choices=("alpha", "landmarks"), default="alpha",
                       help="alpha: fixed landmarks, fresh alpha0 per repeat; landmarks: the reverse")
        p.add_argument("--parallel-repeats", action="store_true", help="run repeats concurrently")

    p_run = sub.add_parser("run", help="one experiment cell from a config file")
    p_run.add_argument("--config", required=True)
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid over m and sampler, plus a full-kernel baseline")
    p_sweep.add_argument("--config", required=True)
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_attack = sub.add_parser("attack", help="distance-matrix completion leakage bench")
    p_attack.add_argument("--config", required=True)
    common(p_attack)
    p_attack.set_defaults(func=cmd_attack)

    p_toy = sub.add_parser("toy", help="train on the synthetic blobs dataset")
    p_toy.add_argument("--n", type=int, default=600, help="training samples")
    p_toy.add_argument("--n-test", type=int, default=600)
    p_toy.add_argument("--m", type=int, default=50)
    p_toy.add_argument("--protocol", choices=("fedcg", "cencg", "naive"), default="fedcg")
    p_toy.add_argument("--sampler", choices=("P", "U", "N"), default="U")
    p_toy.add_argument("--lam", type=float, default=1e-3)
    p_toy.add_argument("--gamma", type=float, default=5.0)
    p_toy.add_argument("--toll", type=float, default=1e-6)
    p_toy.add_argument("--n-hospitals", type=int, default=3)
    p_toy.add_argument("--n-providers", type=int, default=1)
    p_toy.add_argument("--seed", type=int, default=0)
    p_toy.add_argument("--repeats", type=int, default=10)
    common(p_toy)
    p_toy.set_defaults(func=cmd_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
