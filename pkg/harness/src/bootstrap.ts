/**
 * The Python program each execution runs. It is written to a temp file and
 * invoked as `python3 bootstrap.py params.json`.
 *
 * Responsibilities: load the dataset CSV into `df` with pandas' default
 * type inference (period columns stay strings), force a non-interactive
 * matplotlib backend, jail writes to the run directory (cwd + an open()
 * wrapper; best effort), execute the snippet, and save any open figure to
 * the target path when the code did not save one itself.
 *
 * Exit codes: 0 ok, 1 snippet raised, 3 environment/setup failure.
 */
export const BOOTSTRAP_SOURCE = `
import json
import os
import sys
import traceback


def main() -> None:
    with open(sys.argv[1], encoding="utf-8") as fh:
        params = json.load(fh)
    allowed_dir = os.path.realpath(params["allowed_write_dir"])
    target_plot = params["target_plot"]

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        import pandas as pd
    except Exception as exc:
        print(f"setup failed: could not import the plotting stack: {exc}",
              file=sys.stderr)
        sys.exit(3)

    try:
        df = pd.read_csv(params["dataset_csv"])
    except Exception as exc:
        print(f"setup failed: could not load dataset: {exc}", file=sys.stderr)
        sys.exit(3)

    with open(params["code_file"], encoding="utf-8") as fh:
        code = fh.read()

    os.makedirs(allowed_dir, exist_ok=True)
    os.chdir(allowed_dir)

    import builtins

    real_open = builtins.open
    write_flags = set("wax+")

    def guarded_open(file, mode="r", *args, **kwargs):
        if isinstance(file, (str, os.PathLike)) and (set(str(mode)) & write_flags):
            resolved = os.path.realpath(
                os.path.join(os.getcwd(), os.fspath(file)))
            inside = resolved == allowed_dir or resolved.startswith(
                allowed_dir + os.sep)
            if not inside:
                raise PermissionError(
                    f"write outside the run directory is not allowed: {file}")
        return real_open(file, mode, *args, **kwargs)

    builtins.open = guarded_open
    namespace = {"df": df, "pd": pd, "plt": plt, "__name__": "__main__"}
    try:
        exec(compile(code, "<analysis-code>", "exec"), namespace)
    except SystemExit:
        raise
    except BaseException:
        traceback.print_exc()
        sys.exit(1)
    finally:
        builtins.open = real_open

    try:
        if plt.get_fignums() and not os.path.exists(target_plot):
            plt.savefig(target_plot)
        plt.close("all")
    except Exception:
        traceback.print_exc()
        sys.exit(1)


main()
`;
