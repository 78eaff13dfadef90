"""``spdml`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure (including a failed ``check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .affinity import LabeledSpdDataset
from .checks import format_report, run_checks
from .descriptors import rcm
from .errors import InvalidParams, SingularProjectedMatrix, SpdError
from .grassmann import CgConfig
from .io import (
    DatasetManifest,
    ManifestError,
    atomic_write_text,
    read_manifest,
    read_matrix,
    write_manifest,
    write_matrix,
)
from .pipeline import (
    CvPlan,
    SpdMlModel,
    cross_validate,
    fit,
    make_planted_dataset,
    make_planted_observations,
    nn_predict,
    transform_dataset,
)
from .spd import Metric, SpdMatrix

log = logging.getLogger("spdml")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    """Training and cross-validation settings, loadable from JSON."""

    metric: str = "airm"
    m: Optional[int] = None
    nu_w: Optional[int] = None
    nu_b: int = 1
    cv: bool = False
    folds: int = 5
    m_grid: Optional[list] = None
    nu_b_grid: Optional[list] = None
    seed: int = 0
    out: Optional[str] = None
    max_iters: int = 200
    grad_tol: Optional[float] = None
    cost_tol: float = 1e-9
    line_search: str = "golden_section"
    max_step: Optional[float] = None
    beta: str = "polak_ribiere"

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**doc)

    def validate(self, n: Optional[int] = None) -> None:
        try:
            Metric.parse(self.metric)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.cv:
            if not self.m_grid or not self.nu_b_grid:
                raise UsageError("cross-validation needs non-empty m_grid and nu_b_grid")
            dims = list(self.m_grid)
        else:
            if self.m is None:
                raise UsageError("target dimension m is required")
            dims = [self.m]
        if n is not None:
            for m in dims:
                if not 1 <= m < n:
                    raise UsageError(f"need 1 <= m < n, got m={m}, n={n}")
        self.cg_config()

    def cg_config(self) -> CgConfig:
        kw = dict(max_iters=self.max_iters, grad_tol=self.grad_tol, cost_tol=self.cost_tol,
                  line_search=self.line_search, beta=self.beta)
        if self.max_step is not None:
            kw["max_step"] = self.max_step
        try:
            return CgConfig(**kw)
        except InvalidParams as exc:
            raise UsageError(str(exc)) from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_flags(p: argparse.ArgumentParser) -> None:
    # Defaults are None so that only flags given explicitly override the config file.
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with run settings")
    p.add_argument("--metric", choices=["airm", "stein"], default=S)
    p.add_argument("--m", type=int, default=S, help="target dimension")
    p.add_argument("--nu-w", dest="nu_w", type=int, default=S, help="within-class neighbours")
    p.add_argument("--nu-b", dest="nu_b", type=int, default=S, help="between-class neighbours")
    p.add_argument("--cv", action="store_true", default=S, help="select m and nu_b by cross-validation")
    p.add_argument("--folds", type=int, default=S)
    p.add_argument("--m-grid", dest="m_grid", type=_int_list, default=S)
    p.add_argument("--nu-b-grid", dest="nu_b_grid", type=_int_list, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=S)
    p.add_argument("--cost-tol", dest="cost_tol", type=float, default=S)
    p.add_argument("--line-search", dest="line_search", choices=["golden_section", "backtracking"], default=S)
    p.add_argument("--max-step", dest="max_step", type=float, default=S)
    p.add_argument("--beta", choices=["polak_ribiere", "fletcher_reeves"], default=S)


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if getattr(args, "config", None) else RunConfig()
    for f in fields(RunConfig):
        if f.name in vars(args) and f.name != "out":
            setattr(cfg, f.name, getattr(args, f.name))
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spdml", description="Metric learning for SPD matrices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rcm", help="build covariance descriptors from feature observations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="learn a projection")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _run_flags(p)

    p = sub.add_parser("cv", help="cross-validate m and nu_b")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _run_flags(p)

    p = sub.add_parser("transform", help="project SPD matrices with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="nearest-neighbour classification in the projected space")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True, help="training manifest (spd)")
    p.add_argument("--manifest", "--test", dest="manifest", required=True, help="test manifest (spd)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("check", help="run the self-verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the report as JSON")

    p = sub.add_parser("synth", help="write a planted synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["spd", "features"], default="spd")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m-true", dest="m_true", type=int, default=3)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--per-class", dest="per_class", type=int, default=10)
    p.add_argument("--n-obs", dest="n_obs", type=int, default=100, help="observations per sample (features)")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--nuisance", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


# -- data helpers --------------------------------------------------------------


def _load_spd(manifest_path) -> tuple:
    man = read_manifest(manifest_path)
    if man.kind != "spd":
        raise DataError(f"{manifest_path}: expected a manifest of kind 'spd', got {man.kind!r}")
    mats = []
    for path, M in zip(man.paths(), man.load()):
        try:
            mats.append(SpdMatrix(M))
        except SpdError as exc:
            raise DataError(f"{path}: {exc}") from None
    return man, LabeledSpdDataset.from_list(mats, man.labels, validate=False)


def _write_spd_set(out_dir: Path, names, mats, labels, n) -> DatasetManifest:
    samples = []
    for name, M, lab in zip(names, mats, labels):
        rel = f"{name}.txt"
        write_matrix(out_dir / rel, M)
        samples.append((rel, int(lab)))
    man = DatasetManifest("spd", int(n), samples, root=out_dir)
    write_manifest(out_dir / "manifest.json", man)
    return man


def _write_json(path: Path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- commands ------------------------------------------------------------------


def cmd_rcm(args) -> int:
    man = read_manifest(args.manifest)
    if man.kind != "features":
        raise DataError(f"{args.manifest}: expected a manifest of kind 'features', got {man.kind!r}")
    out = Path(args.out)
    names, mats, labels, errors = [], [], [], []
    for (rel, lab), path in zip(man.samples, man.paths()):
        try:
            O = read_matrix(path)
            if O.shape[0] != man.n:
                raise ManifestError(f"shape {O.shape} does not match declared n={man.n}")
            C = rcm(O)
        except (SpdError, ManifestError, OSError) as exc:
            errors.append({"path": str(path), "error": type(exc).__name__, "message": str(exc)})
            log.error("%s: %s", path, exc)
            continue
        names.append(Path(rel).stem)
        mats.append(C.values)
        labels.append(lab)
    if mats:
        _write_spd_set(out, names, mats, labels, man.n)
    if errors:
        _write_json(out / "errors.json", errors)
        return EXIT_DATA
    return EXIT_OK


def _trace_tsv(trace) -> str:
    rows = ["iter\tcost\tgrad_norm\tstep"]
    rows += [f"{r.iteration}\t{r.cost:.17g}\t{r.grad_norm:.17g}\t{r.step:.17g}" for r in trace]
    return "\n".join(rows) + "\n"


def _cross_validate(cfg: RunConfig, data):
    plan = CvPlan(cfg.folds, list(cfg.m_grid), list(cfg.nu_b_grid))
    nu_w_rule = None if cfg.nu_w is None else (lambda _d: cfg.nu_w)
    return cross_validate(data, plan, nu_w_rule, cfg.metric, cfg.cg_config(), seed=cfg.seed)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    _, data = _load_spd(args.manifest)
    cfg.validate(data.dim)
    out = Path(cfg.out)
    if cfg.cv:
        res = _cross_validate(cfg, data)
        _write_json(out / "cv.json", res.to_dict())
        m, nu_b = res.best_m, res.best_nu_b
    else:
        m, nu_b = cfg.m, cfg.nu_b
    model = fit(data, m, cfg.nu_w, nu_b, cfg.metric, cfg.cg_config(), seed=cfg.seed)
    atomic_write_text(out / "model.json", model.to_json())
    atomic_write_text(out / "trace.tsv", _trace_tsv(model.trace))
    log.info("model written to %s", out / "model.json")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _resolve_config(args)
    cfg.cv = True
    _, data = _load_spd(args.manifest)
    cfg.validate(data.dim)
    res = _cross_validate(cfg, data)
    _write_json(Path(cfg.out) / "cv.json", res.to_dict())
    print(f"best m = {res.best_m}, best nu_b = {res.best_nu_b}, "
          f"mean accuracy = {res.mean_accuracy(res.best_m, res.best_nu_b):.4f}")
    return EXIT_OK


def _load_model(path) -> SpdMlModel:
    try:
        return SpdMlModel.from_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: cannot read model: {exc}") from None
    except SpdError as exc:
        raise DataError(f"{path}: {exc}") from None


def _check_model_dim(model, data, source):
    if data.dim != model.n:
        raise DataError(f"{source}: matrices are {data.dim}x{data.dim} but the model expects n={model.n}")


def cmd_transform(args) -> int:
    model = _load_model(args.model)
    man, data = _load_spd(args.manifest)
    _check_model_dim(model, data, args.manifest)
    proj = transform_dataset(model, data)
    names = [Path(rel).stem for rel, _ in man.samples]
    _write_spd_set(Path(args.out), names, proj.matrices, proj.labels, model.m)
    return EXIT_OK


def cmd_classify(args) -> int:
    model = _load_model(args.model)
    _, train = _load_spd(args.train)
    test_man, test = _load_spd(args.manifest)
    _check_model_dim(model, train, args.train)
    _check_model_dim(model, test, args.manifest)
    pred = nn_predict(transform_dataset(model, train), transform_dataset(model, test).matrices, model.metric)
    truth = test.labels
    out = Path(args.out)
    rows = ["index\tpath\tlabel\tpredicted"]
    rows += [f"{i}\t{rel}\t{t}\t{p}" for i, ((rel, _), t, p) in enumerate(zip(test_man.samples, truth, pred))]
    atomic_write_text(out / "predictions.tsv", "\n".join(rows) + "\n")
    classes = sorted(set(train.labels.tolist()) | set(truth.tolist()))
    confusion = {str(a): {str(b): int(np.sum((truth == a) & (pred == b))) for b in classes} for a in classes}
    per_class = {str(c): float(np.mean(pred[truth == c] == c)) for c in np.unique(truth)}
    summary = {
        "accuracy": float(np.mean(pred == truth)),
        "n_samples": int(len(truth)),
        "per_class_accuracy": per_class,
        "confusion": confusion,
        "metric": model.metric.value,
    }
    _write_json(out / "summary.json", summary)
    print(f"accuracy = {summary['accuracy']:.4f} on {len(truth)} samples")
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(seed=args.seed)
    sys.stdout.write(format_report(results))
    if args.out:
        _write_json(Path(args.out), [asdict(r) for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.kind == "spd":
        data, basis = make_planted_dataset(args.n, args.m_true, args.classes, args.per_class, args.noise,
                                           args.seed, args.separation, args.nuisance)
        mats, labels = data.matrices, data.labels
        names = [f"sample_{i:04d}" for i in range(len(labels))]
        _write_spd_set(out, names, mats, labels, args.n)
    else:
        obs, labels, basis = make_planted_observations(args.n, args.m_true, args.classes, args.per_class,
                                                       args.n_obs, args.noise, args.seed, args.separation,
                                                       args.nuisance)
        samples = []
        for i, (O, lab) in enumerate(zip(obs, labels)):
            rel = f"sample_{i:04d}.txt"
            write_matrix(out / rel, O)
            samples.append((rel, int(lab)))
        write_manifest(out / "manifest.json", DatasetManifest("features", args.n, samples, root=out))
    write_matrix(out / "planted_basis.txt", basis)
    return EXIT_OK


COMMANDS = {
    "rcm": cmd_rcm,
    "train": cmd_train,
    "cv": cmd_cv,
    "transform": cmd_transform,
    "classify": cmd_classify,
    "check": cmd_check,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidParams) as exc:
        print(f"spdml: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ManifestError, SpdError, OSError) as exc:
        print(f"spdml: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularProjectedMatrix, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"spdml: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
