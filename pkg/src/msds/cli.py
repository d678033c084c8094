"""Command-line experiment harness.

Each subcommand reads a TOML config (see ``msds.config``), runs one study and
writes CSV or JSON into the output directory.  Every output embeds the
resolved config.  Exit codes: 0 success, 2 config or input error, 3 numerical
failure.
"""

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from . import chaos, coeff, config, fem, mesh, offline, online, reduction, reference
from .errors import BasisFormatError, ConfigError, InvalidArgumentError, MsdsError
from .forcing import SineForcing, ZeroForcing, random_forcings

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# independent random streams derived from the global seed
STREAM_FORCINGS, STREAM_PROBES, STREAM_COVERAGE, STREAM_MC = 1, 2, 3, 4


def stream_seed(seed, tag):
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1, np.uint64)[0])


# ------------------------------------------------------------------ builders


def make_field(cfg):
    c = cfg["coefficient"]
    return coeff.by_name(c["name"], seed=c["seed"], value=c["value"])


def make_forcing(cfg):
    f = cfg["forcing"]
    if f["kind"] == "zero":
        return ZeroForcing()
    return SineForcing(f["k"], f["l"], f["phase1"], f["phase2"])


def make_truncation(cfg):
    if cfg["basis"]["truncation"] == "example3":
        return offline.example3_truncation(cfg["basis"]["order"])
    return None


class Problem:
    """Meshes, field, index set and block stiffness for one config."""

    def __init__(self, cfg, order=None, coarse_n=None):
        self.cfg = cfg
        self.order = cfg["basis"]["order"] if order is None else int(order)
        self.fine = mesh.build_uniform_mesh(cfg["mesh"]["fine"])
        self.coarse = mesh.build_uniform_mesh(cfg["mesh"]["coarse"] if coarse_n is None else coarse_n)
        self.field = make_field(cfg)
        self.J = chaos.total_degree_set(self.field.r, self.order)
        self.K = fem.assemble_block_stiffness(self.fine, self.field, self.J)
        self._reference = None

    def n_xi(self):
        n = self.cfg["basis"]["n_xi"]
        if n == "auto":
            u = reference.solve_sfem(self.K, make_forcing(self.cfg))
            rep = reduction.spectrum(reduction.build_Y(u, self.coarse), tol=self.cfg["basis"]["n_xi_tol"])
            return rep.n_xi
        return min(int(n), len(self.J))

    def build_basis(self):
        return offline.build_all(
            self.coarse,
            self.fine,
            self.field,
            self.J,
            n_xi=self.n_xi(),
            layers=config.layers_for(self.cfg, self.coarse.n),
            truncation=make_truncation(self.cfg),
            K=self.K,
            method=self.cfg["basis"]["kkt"],
            workers=self.cfg["workers"],
        )

    def reference_solver(self):
        """Object whose ``solve(f)`` has ``mean`` and ``std`` nodal fields."""
        if self._reference is None:
            r = self.cfg["reference"]
            if r["method"] == "sfem":
                self._reference = _SfemReference(self.K)
            elif r["method"] == "collocation":
                self._reference = reference.CollocationSolver(
                    self.fine, self.field, chaos.quad_rule(self.field.r, r["points"])
                )
            else:
                self._reference = _McReference(
                    self.fine, self.field, r["samples"], stream_seed(self.cfg["seed"], STREAM_MC)
                )
        return self._reference


class _SfemReference:
    def __init__(self, K):
        self.solver = reference.SfemSolver(K)

    def solve(self, f):
        u, _ = self.solver.solve(f)
        return reference.ReferenceSolution(mean=u.mean, std=u.std, method="sfem", u=u)


class _McReference:
    def __init__(self, fine, field, samples, seed):
        self.fine, self.field, self.samples, self.seed = fine, field, samples, seed

    def solve(self, f):
        return reference.solve_mc(self.fine, self.field, f, self.samples, self.seed)


# ------------------------------------------------------------------- outputs


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(cfg, columns, rows):
    buf = io.StringIO()
    buf.write("# config: " + config.dumps(cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def write_json(path, cfg, payload):
    data = {"config": cfg, **payload}
    write_text(path, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def read_csv(path):
    """Rows of a CSV written by this module, as dicts of strings."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# --------------------------------------------------------------- subcommands


def cmd_offline(cfg, out, basis_path=None):
    prob = Problem(cfg)
    t = time.perf_counter()
    bset = prob.build_basis()
    seconds = time.perf_counter() - t
    path = basis_path or os.path.join(out, "basis.msds")
    offline.save_basis(bset, path, config=cfg)
    diag = bset.diagnostics or {}
    report = {
        "basis_file": os.path.basename(path),
        "functions": len(bset),
        "n_xi": bset.n_xi,
        "layers": bset.layers,
        "offline_seconds": seconds,
        "diagnostics": diag,
    }
    write_json(os.path.join(out, "offline_report.json"), cfg, report)
    return report


def _load_or_build(prob, basis_path):
    if basis_path:
        bset = offline.load_basis(basis_path, prob.fine.n, prob.coarse.n, prob.field)
        if bset.J.p != prob.J.p or bset.J.r != prob.J.r:
            raise BasisFormatError(f"basis uses chaos order {bset.J.p}, config asks for {prob.J.p}")
        return bset, 0.0
    t = time.perf_counter()
    bset = prob.build_basis()
    return bset, time.perf_counter() - t


def cmd_solve(cfg, out, basis_path=None):
    prob = Problem(cfg)
    bset, _ = _load_or_build(prob, basis_path)
    sys_ = online.assemble_coarse(bset, prob.K)
    sol = online.solve_online(sys_, bset, make_forcing(cfg))
    xy = prob.fine.vertices
    rows = [{"x": x, "y": y, "mean": m, "std": s} for (x, y), m, s in zip(xy, sol.mean, sol.std)]
    write_text(os.path.join(out, "solution.csv"), csv_text(cfg, ["x", "y", "mean", "std"], rows))
    stats = {
        "mean_max": float(np.abs(sol.mean).max()),
        "std_max": float(sol.std.max()),
        "mean_L2": fem.l2_norm(prob.fine, sol.mean),
        "std_L2": fem.l2_norm(prob.fine, sol.std),
        "coarse_size": sys_.size,
    }
    write_json(os.path.join(out, "solve_report.json"), cfg, stats)
    return stats


MULTIQUERY_COLUMNS = ["forcing_id", "k", "l", "phase1", "phase2", *online.ERROR_COLUMNS]


def cmd_multiquery(cfg, out, basis_path=None):
    prob = Problem(cfg)
    bset, offline_seconds = _load_or_build(prob, basis_path)
    sys_ = online.assemble_coarse(bset, prob.K)
    forcings = random_forcings(cfg["forcing"]["count"], stream_seed(cfg["seed"], STREAM_FORCINGS))
    rows = online.multiquery(sys_, bset, forcings, prob.reference_solver())
    write_text(os.path.join(out, "multiquery.csv"), csv_text(cfg, MULTIQUERY_COLUMNS, rows))
    times = [r["online_seconds"] for r in rows if "online_seconds" in r]
    report = {
        "forcings": len(rows),
        "factorizations": sys_.factorizations,
        "offline_seconds": offline_seconds,
        "assembly_seconds": sys_.assembly_seconds,
        "online_seconds": times,
        "failures": [r for r in rows if "error" in r],
    }
    write_json(os.path.join(out, "multiquery_report.json"), cfg, report)
    return rows, report


def cmd_converge_h(cfg, out, basis_path=None):
    fine = mesh.build_uniform_mesh(cfg["mesh"]["fine"])
    base = Problem(cfg)
    ref = base.reference_solver().solve(make_forcing(cfg))
    rows = []
    for nc in cfg["study"]["coarse_list"]:
        prob = Problem.__new__(Problem)
        prob.__dict__.update(base.__dict__)
        prob.coarse = mesh.build_uniform_mesh(nc)
        t = time.perf_counter()
        bset = prob.build_basis()
        sys_ = online.assemble_coarse(bset, prob.K)
        sol = online.solve_online(sys_, bset, make_forcing(cfg))
        errs = fem.relative_errors(fine, ref.mean, ref.std, sol.mean, sol.std)
        rows.append({"H": 1.0 / nc, **errs, "layers": bset.layers, "seconds": time.perf_counter() - t})
    cols = ["H", *online.ERROR_COLUMNS]
    write_text(os.path.join(out, "converge_h.csv"), csv_text(cfg, cols, rows))
    report = {"rows": rows}
    if len(rows) > 1:
        H = np.array([r["H"] for r in rows])
        report["slopes"] = {
            k: float(np.polyfit(np.log(H), np.log([r[k] for r in rows]), 1)[0]) for k in online.ERROR_COLUMNS
        }
    write_json(os.path.join(out, "converge_h.json"), cfg, report)
    return rows, report


def cmd_converge_p(cfg, out, basis_path=None):
    """Online error against the reference for each chaos order; the error of
    the fine-scale Galerkin (SFEM) solution is reported alongside."""
    f = make_forcing(cfg)
    rows = []
    ref = None
    for p in cfg["study"]["order_list"]:
        prob = Problem(cfg, order=p)
        if ref is None:
            ref = prob.reference_solver().solve(f)
        t = time.perf_counter()
        bset = prob.build_basis()
        sys_ = online.assemble_coarse(bset, prob.K)
        sol = online.solve_online(sys_, bset, f)
        row = {"p": p, **fem.relative_errors(prob.fine, ref.mean, ref.std, sol.mean, sol.std)}
        u = reference.solve_sfem(prob.K, f)
        sf = fem.relative_errors(prob.fine, ref.mean, ref.std, u.mean, u.std)
        row.update({"sfem_" + k: v for k, v in sf.items()})
        row["seconds"] = time.perf_counter() - t
        rows.append(row)
    cols = ["p", *online.ERROR_COLUMNS, *["sfem_" + k for k in online.ERROR_COLUMNS]]
    write_text(os.path.join(out, "converge_p.csv"), csv_text(cfg, cols, rows))
    write_json(os.path.join(out, "converge_p.json"), cfg, {"rows": rows})
    return rows


def cmd_eigdecay(cfg, out, basis_path=None):
    prob = Problem(cfg)
    u = reference.solve_sfem(prob.K, make_forcing(cfg))
    Y = reduction.build_Y(u, prob.coarse)
    rep = reduction.spectrum(Y, tol=cfg["basis"]["n_xi_tol"])
    stop = min(8, rep.mu.size)
    payload = rep.to_dict()
    payload["log10_slope"] = reduction.log_slope(rep.mu, 1, stop) if stop >= 2 else None
    payload["shape"] = list(Y.shape)
    write_json(os.path.join(out, "eigdecay.json"), cfg, payload)
    return rep, payload


def cmd_estimate_nxi(cfg, out, basis_path=None, coverage_trials=None):
    prob = Problem(cfg)
    bset, _ = _load_or_build(prob, basis_path)
    sys_ = online.assemble_coarse(bset, prob.K)
    st = cfg["study"]
    forcings = random_forcings(st["dictionary"], stream_seed(cfg["seed"], STREAM_FORCINGS))
    sfem = reference.SfemSolver(prob.K)
    dictionary = reduction.ErrorDictionary(
        forcings,
        dsm=lambda f: online.solve_online(sys_, bset, f).u,
        reference=lambda f: sfem.solve(f)[0],
        K=prob.K,
    )
    rep = reduction.estimate_nxi(
        dictionary, st["probes"], st["alpha"], stream_seed(cfg["seed"], STREAM_PROBES), n_xi=bset.n_xi
    )
    trials = st["coverage_trials"] if coverage_trials is None else coverage_trials
    extra = {"config": cfg, "report": rep.to_dict()}
    if trials:
        frac, bounds = reduction.coverage(
            dictionary, st["probes"], st["alpha"], trials, stream_seed(cfg["seed"], STREAM_COVERAGE)
        )
        extra["coverage"] = {"trials": trials, "fraction": frac, "bounds": bounds.tolist()}
    write_text(os.path.join(out, "estimate_nxi.json"), reduction.report_json(bound_report=rep, extra=extra) + "\n")
    return rep, extra


COMMANDS = {
    "offline": cmd_offline,
    "solve": cmd_solve,
    "multiquery": cmd_multiquery,
    "converge-h": cmd_converge_h,
    "converge-p": cmd_converge_p,
    "eigdecay": cmd_eigdecay,
    "estimate-nxi": cmd_estimate_nxi,
}


def parser():
    ap = argparse.ArgumentParser(prog="msds", description="Data-driven stochastic multiscale experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--workers", type=int, metavar="N")
        p.add_argument("--basis", metavar="PATH")
        if name == "estimate-nxi":
            p.add_argument("--coverage", type=int, metavar="TRIALS", help="run the seeded coverage experiment")
    return ap


def main(argv=None):
    args = parser().parse_args(argv)
    overrides = {k: v for k, v in (("seed", args.seed), ("workers", args.workers), ("out", args.out)) if v is not None}
    try:
        cfg = config.load(args.config, overrides=overrides)
        out = cfg["out"]
        os.makedirs(out, exist_ok=True)
        kwargs = {"basis_path": args.basis}
        if args.command == "estimate-nxi" and args.coverage is not None:
            kwargs["coverage_trials"] = args.coverage
        COMMANDS[args.command](cfg, out, **kwargs)
    except (ConfigError, BasisFormatError, InvalidArgumentError, FileNotFoundError) as exc:
        print(f"msds: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MsdsError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"msds: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
