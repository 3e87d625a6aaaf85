"""Command-line front end.

Subcommands map to the experiment families: ``session`` (one market
run), ``quiver`` (phase-space drift field of one adaptive buyer/seller
pair), ``coevolve`` (many adaptive traders, recurrence analysis of the
strategy log), ``stgp`` (multi-generation strategy evolution).  All
output files are rendered in memory first, so a failing run writes
nothing.
"""

import argparse
import io
import sys
from pathlib import Path

from . import analysis, coevo, harness, lob, stgp

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coevomarket",
        description="market sessions with minimal-intelligence and "
                    "coevolving adaptive traders")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("session", "run one market session"),
                       ("quiver", "sample the adaptive-pair drift field"),
                       ("coevolve", "run adaptive traders and analyze "
                                    "strategy recurrence"),
                       ("stgp", "evolve quote expressions over generations")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's master seed")
        p.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    try:
        doc = harness.load_config(args.config)
        outputs = _HANDLERS[args.command](doc, args.seed)
    except (harness.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        for name, content in outputs.items():
            (outdir / name).write_text(content, encoding="utf8")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0

def _master_seed(doc: dict, override):
    if override is not None:
        return override
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise harness.ConfigError("seed must be an integer")
    return seed

def _session_cmd(doc: dict, seed) -> dict:
    cfg = harness.parse_session_config(doc, seed=seed)
    result = harness.run_session(cfg)
    tape = io.StringIO()
    lob.export_tape(result.tape, tape)
    profits = io.StringIO()
    profits.write("trader_id,side,profit\n")
    for entry in cfg.roster:
        profits.write(f"{entry.tid},{entry.side},{result.profits[entry.tid]}\n")
    return {"tape.csv": tape.getvalue(), "profits.csv": profits.getvalue()}

def _quiver_cmd(doc: dict, seed) -> dict:
    harness._reject_unknown(doc, {"grid_res", "horizon", "reps", "workers",
                                  "seed", "session"}, "quiver config")
    if "session" not in doc:
        raise harness.ConfigError("quiver config needs a 'session' template")
    template = harness.parse_session_config(doc["session"])
    field = coevo.quiver_sample(template,
                                grid_res=doc.get("grid_res", 21),
                                horizon=doc.get("horizon", 1000),
                                reps=doc.get("reps", 5),
                                seed=_master_seed(doc, seed),
                                workers=doc.get("workers", 1))
    out = io.StringIO()
    coevo.export_quiver(field, out)
    return {"quiver.csv": out.getvalue()}

def _coevolve_cmd(doc: dict, seed) -> dict:
    harness._reject_unknown(doc, {"eps_frac", "theiler", "l_min", "v_min",
                                  "session"}, "coevolve config")
    if "session" not in doc:
        raise harness.ConfigError("coevolve config needs a 'session' entry")
    cfg = harness.parse_session_config(doc["session"], seed=seed)
    result = harness.run_session(cfg)
    log = result.strategy_log
    if log is None:
        raise harness.ConfigError("coevolve roster has no adaptive (PRZI_SHC) "
                                  "traders to log")
    eps = analysis.default_epsilon(log, frac=doc.get("eps_frac", 0.1))
    matrix = analysis.recurrence_matrix(log, eps,
                                        theiler_w=doc.get("theiler", 1))
    metrics = analysis.rqa_metrics(matrix, l_min=doc.get("l_min", 2),
                                   v_min=doc.get("v_min", 2))

    log_ids = [e.tid for e in cfg.roster if e.strategy.kind == "PRZI_SHC"]
    strategies = io.StringIO()
    strategies.write("time," + ",".join(log_ids) + "\n")
    for t, row in zip(log.times, log.samples):
        strategies.write(f"{t}," + ",".join(repr(float(v)) for v in row) + "\n")
    pbm = io.StringIO()
    analysis.write_pbm(matrix, pbm)
    rqa = io.StringIO()
    analysis.export_rqa(metrics, rqa)
    return {"strategies.csv": strategies.getvalue(),
            "recurrence.pbm": pbm.getvalue(),
            "rqa.csv": rqa.getvalue()}

def _stgp_cmd(doc: dict, seed) -> dict:
    harness._reject_unknown(doc, {"generations", "seed_genome", "p_x", "p_mut",
                                  "max_depth", "const_pool", "eps_sel", "seed",
                                  "session"}, "stgp config")
    for key in ("generations", "seed_genome", "session"):
        if key not in doc:
            raise harness.ConfigError(f"stgp config needs {key!r}")
    template = harness.parse_session_config(doc["session"], template=True)
    params = stgp.GenParams(
        p_x=doc.get("p_x", 0.9),
        p_mut=doc.get("p_mut", 0.05),
        max_depth=doc.get("max_depth", 8),
        const_pool=tuple(doc.get("const_pool", (1, 7))),
        eps_sel=doc.get("eps_sel", 1e-6),
    )
    genome = stgp.parse_tree(doc["seed_genome"])
    series = stgp.run_experiment(template, genome, doc["generations"], params,
                                 _master_seed(doc, seed))
    stats = io.StringIO()
    stgp.export_genstats(series, stats)
    elites = io.StringIO()
    for row in series:
        elites.write(f"gen={row.gen} fitness={row.max_fitness!r} "
                     f"{stgp.format_tree(row.elite)}\n")
    return {"genstats.csv": stats.getvalue(), "elites.txt": elites.getvalue()}

_HANDLERS = {
    "session": _session_cmd,
    "quiver": _quiver_cmd,
    "coevolve": _coevolve_cmd,
    "stgp": _stgp_cmd,
}

if __name__ == "__main__":
    sys.exit(main())
