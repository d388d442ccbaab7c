"""Command-line runner.

    branchmera decouple-exact --n 8
    branchmera oracle --model xx --mu 0 --entropy-max-L 1024
    branchmera optimize --config run.cfg
    branchmera scaling-dims --checkpoint out/state_s1.ckpt
    branchmera entropy --checkpoint out/state_s1.ckpt

Outputs go to --out (default ./out); the BRANCHMERA_OUT environment
variable overrides it. Exit codes: 2 invalid config, 3 numerical failure,
4 size cap. Errors print one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .branching import (BranchingConfig, BranchingMeraState, branch_entropy_profile, exact_v_gates,
                        init_branching, optimize_branching)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .exact_decoupler import CertificationError, bond_sign, decouple_xx_exact, rewrite_sublattice_as_ising
from .free_fermions import (block_entropy, entropy_profile, fit_central_charge, ising_energy_per_site,
                            xx_energy_per_site, xx_filling)
from .mera import ConvergenceError, Mera, MeraConfig, optimize_mera, scaling_operators
from .spin_models import SizeLimitError, build_ising, build_xx

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SIZE = 2, 3, 4
OUT_ENV = "BRANCHMERA_OUT"

# Ising CFT primaries with their first descendants, local and twisted sectors together
TOWERS = {"I": [0.0, 2.0], "sigma": [0.125, 1.125], "mu": [0.125, 1.125],
          "psi": [0.5, 1.5], "epsilon": [1.0, 2.0]}


class Writer:
    """Collects output files and writes them only once the run succeeded."""

    def __init__(self, out_dir, tag: str):
        self.out_dir = out_dir
        self.tag = tag
        self.files = {}

    def _header(self):
        return {"config_hash": self.tag, "version": __version__}

    def json(self, name, payload: dict):
        body = {**self._header(), **payload}
        self.files[name] = json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n"

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.tag} version={__version__}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        self.files[name] = buf.getvalue()

    def flush(self):
        os.makedirs(self.out_dir, exist_ok=True)
        for name, text in self.files.items():
            with open(os.path.join(self.out_dir, name), "w") as fh:
                fh.write(text)
        return sorted(self.files)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"cannot serialise {type(x)}")


def _hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _out_dir(args):
    return os.environ.get(OUT_ENV) or args.out


# ---------------------------------------------------------------- commands

def cmd_decouple_exact(args):
    tag = _hash({"cmd": "decouple-exact", "n": args.n, "boundary": args.boundary, "swap": args.swap})
    res = decouple_xx_exact(args.n, args.boundary, args.swap)
    report = res.report()
    for name, block in (("A", res.H_A), ("B", res.H_B)):
        try:
            rewrite_sublattice_as_ising(block)
            report[f"block_{name}_is_ising"] = True
        except CertificationError:
            report[f"block_{name}_is_ising"] = False
        report[f"block_{name}_bond_sign"] = bond_sign(block)
    w = Writer(_out_dir(args), tag)
    w.json("decouple_exact.json", report)
    return w, report


def cmd_oracle(args):
    tag = _hash({"cmd": "oracle", "model": args.model, "mu": args.mu, "L": args.entropy_max_L})
    if args.model == "xx":
        e = xx_energy_per_site(args.mu)
        filling = xx_filling(args.mu)
        # filling = fraction of occupied Jordan-Wigner modes, 1 - k_F/pi
    else:
        e = ising_energy_per_site(args.g)
        filling = None
    Ls = sorted({int(L) for L in np.unique(np.round(np.geomspace(1, args.entropy_max_L, 24)))})
    prof = entropy_profile(args.model, Ls, mu=args.mu, g=args.g)
    fit_Ls = [L for L in Ls if L >= min(16, args.entropy_max_L // 4)]
    try:
        c = fit_central_charge(entropy_profile(args.model, fit_Ls, mu=args.mu, g=args.g))
    except ValueError:
        c = None
    summary = {"model": args.model, "mu": args.mu, "energy_per_site": e, "filling": filling,
               "central_charge_fit": c, "fit_range": [min(fit_Ls), max(fit_Ls)]}
    w = Writer(_out_dir(args), tag)
    w.csv("oracle_entropy.csv", ["L", "S_L"], zip(prof.L.astype(int), prof.S))
    w.csv("oracle_entropy_plot.csv", ["log2_L", "S_L"], zip(np.log2(prof.L), prof.S))
    w.json("oracle.json", summary)
    return w, summary


def _model(cfg: RunConfig):
    return build_xx(cfg.mu) if cfg.model == "xx" else build_ising(cfg.g)


def _oracle_energy(cfg: RunConfig):
    return xx_energy_per_site(cfg.mu) if cfg.model == "xx" else ising_energy_per_site(cfg.g)


def cmd_optimize(args):
    cfg = load_config(args.config).validate(need_seed=True)
    tag = cfg.digest()
    h = _model(cfg)
    oracle = _oracle_energy(cfg)
    out = _out_dir(args)
    w = Writer(out, tag)
    runs = []
    ckpts = []
    resume = None
    if args.resume:
        resume, _ = load_checkpoint(args.resume)
    if not cfg.branching or cfg.model == "ising":
        mcfg = MeraConfig(chi=cfg.chi_trunk, n_transitional=cfg.n_transitional, sweeps=cfg.sweeps,
                          tol=cfg.tol, seed=cfg.seed)
        res = optimize_mera(h, mcfg, mera=resume if isinstance(resume, Mera) else None)
        runs.append({"s_star": None, "energy_per_site": res.report.energy_per_site,
                     "error": res.report.energy_per_site - oracle, "trace": res.trace,
                     "rolled_back": res.rolled_back})
        ckpts.append(("state_plain.ckpt", res.mera))
    else:
        for k, s in enumerate(cfg.s_star_list):
            bcfg = BranchingConfig(mu=cfg.mu, chi_trunk=cfg.chi_trunk, chi_branch=cfg.chi_branch, s_star=s,
                                   swap_kind=cfg.swap_kind, outer_iterations=cfg.sweeps,
                                   branch_sweeps=cfg.branch_sweeps, n_transitional=cfg.n_transitional,
                                   tol=cfg.tol, seed=cfg.seed + k)
            state = None
            if isinstance(resume, BranchingMeraState) and resume.s_star == s:
                state = resume
            elif s == 0 and cfg.mu == 0.0:
                state = init_branching([0, 1], bcfg, v_gates=exact_v_gates(cfg.swap_kind))
            res = optimize_branching(h, bcfg, state=state)
            runs.append({"s_star": s, "energy_per_site": res.report.energy_per_site,
                         "error": res.report.energy_per_site - oracle, "trace": res.trace,
                         "residual_coupling": res.residual_coupling, "rolled_back": res.rolled_back})
            ckpts.append((f"state_s{s}.ckpt", res.state))
    best = min(runs, key=lambda r: r["energy_per_site"])
    summary = {"config": cfg.__dict__, "oracle_energy_per_site": oracle, "runs": runs,
               "best_s_star": best["s_star"], "best_energy_per_site": best["energy_per_site"]}
    rows = [(r["s_star"] if r["s_star"] is not None else -1, i, e) for r in runs for i, e in enumerate(r["trace"])]
    w.csv("energy_trace.csv", ["s_star", "iteration", "energy_per_site"], rows)
    w.json("optimize.json", summary)
    written = w.flush()
    for name, st in ckpts:
        save_checkpoint(os.path.join(out, name), st, {"config_hash": tag, "version": __version__})
        written.append(name)
    return None, {**summary, "files": written}


def _tower_assignment(delta):
    best = min(((abs(delta - v), name, i) for name, vals in TOWERS.items() for i, v in enumerate(vals)))
    return best[1], best[2], best[0]


def cmd_scaling_dims(args):
    state, meta = load_checkpoint(args.checkpoint)
    tag = _hash({"cmd": "scaling-dims", "ckpt": meta.get("config_hash"), "n_ops": args.n_ops})
    tops = {"M": state.top} if isinstance(state, Mera) else {b: m.top for b, m in state.branches.items()}
    rows, result = [], {}
    for b, layer in tops.items():
        ops = scaling_operators(layer, args.n_ops)
        result[b] = []
        for k, o in enumerate(ops):
            name, level, dist = _tower_assignment(o.delta)
            rows.append((b, k, o.delta, o.sector, -1 if o.parity is None else o.parity, name, level))
            result[b].append({"delta": o.delta, "sector": o.sector, "parity": o.parity,
                              "tower": name, "tower_level": level})
    w = Writer(_out_dir(args), tag)
    w.csv("scaling_dims.csv", ["branch", "index", "delta", "sector", "parity", "tower", "tower_level"], rows)
    w.csv("scaling_dims_plot.csv", ["branch", "tower", "tower_level", "delta"],
          sorted((r[0], r[5], r[6], r[2]) for r in rows))
    w.json("scaling_dims.json", {"checkpoint_config_hash": meta.get("config_hash"), "branches": result})
    return w, result


def cmd_entropy(args):
    state, meta = load_checkpoint(args.checkpoint)
    tag = _hash({"cmd": "entropy", "ckpt": meta.get("config_hash")})
    if not isinstance(state, BranchingMeraState):
        raise ConfigError("entropy needs a branching checkpoint")
    profiles = branch_entropy_profile(state)
    rows, fits = [], {}
    for b, p in profiles.items():
        rows += [(b, int(L), float(S)) for L, S in zip(p.L, p.S)]
        try:
            fits[b] = fit_central_charge(p)
        except ValueError:
            fits[b] = None
    w = Writer(_out_dir(args), tag)
    w.csv("branch_entropy.csv", ["branch", "L", "S_L"], rows)
    w.csv("branch_entropy_plot.csv", ["branch", "log2_L", "S_L"], [(b, np.log2(L), S) for b, L, S in rows])
    w.json("entropy.json", {"central_charge_fit": fits})
    return w, fits


# ---------------------------------------------------------------- entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    ap = _Parser(prog="branchmera", description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="out", help="output directory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decouple-exact", help="analytic decoupling of the mu=0 XX chain")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--boundary", choices=["open", "periodic"], default="open")
    p.add_argument("--swap", choices=["fermionic", "bosonic"], default="fermionic")

    p = sub.add_parser("oracle", help="free-fermion energies and entropies")
    p.add_argument("--model", choices=["xx", "ising"], default="xx")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--entropy-max-L", type=int, default=1024)

    p = sub.add_parser("optimize", help="variational (branching) MERA optimisation")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("scaling-dims", help="scaling dimensions of the scale-invariant layers")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-ops", type=int, default=12)

    p = sub.add_parser("entropy", help="branch entanglement entropies")
    p.add_argument("--checkpoint", required=True)
    return ap


COMMANDS = {"decouple-exact": cmd_decouple_exact, "oracle": cmd_oracle, "optimize": cmd_optimize,
            "scaling-dims": cmd_scaling_dims, "entropy": cmd_entropy}


def _fail(code, exc):
    rec = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    try:
        writer, result = COMMANDS[args.command](args)
        files = writer.flush() if writer is not None else result.pop("files", [])
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except SizeLimitError as exc:
        return _fail(EXIT_SIZE, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (ConvergenceError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    print(json.dumps({"status": "ok", "command": args.command, "files": files}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
