"""Reference solver wrapper: ``hybridte-highs [options] model.lp solution.out``.

Solves an LP-format model with HiGHS and writes the normalized solution
file (``name value`` for nonzero variables, then ``OBJECTIVE value``).
Exit status: 0 optimal, 2 infeasible, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="hybridte-highs", description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--mip-gap", type=float, default=0.0, help="relative MIP gap (default 0)")
    ap.add_argument("--time-limit", type=float, default=None, help="seconds")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", bool(args.verbose))
    h.setOptionValue("threads", args.threads)
    h.setOptionValue("mip_rel_gap", args.mip_gap)
    h.setOptionValue("random_seed", 0)
    if args.time_limit is not None:
        h.setOptionValue("time_limit", args.time_limit)
    if h.readModel(args.model) == highspy.HighsStatus.kError:
        print(f"hybridte-highs: cannot read {args.model}", file=sys.stderr)
        return 1
    h.run()
    status = h.getModelStatus()
    if status in (highspy.HighsModelStatus.kInfeasible,
                  highspy.HighsModelStatus.kUnboundedOrInfeasible):
        print("hybridte-highs: infeasible", file=sys.stderr)
        return 2
    if status != highspy.HighsModelStatus.kOptimal:
        print(f"hybridte-highs: status {h.modelStatusToString(status)}", file=sys.stderr)
        return 1
    names = h.getLp().col_names_
    values = h.getSolution().col_value
    with open(args.solution, "w", encoding="ascii", newline="\n") as fh:
        for name, value in zip(names, values):
            if value != 0.0:
                fh.write(f"{name} {value!r}\n")
        fh.write(f"OBJECTIVE {h.getInfo().objective_function_value!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
