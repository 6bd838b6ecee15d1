"""Human-readable text reports for experiment runs and dataset analyses"""
import math

SEPARATOR = "=" * 70
RULE = "━" * 70


def _fmt(value, spec=".3f"):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return format(value, spec)


def _window_note(row):
    if "window" not in row:
        return ""
    lo, hi = row["window"]
    mark = "inside" if row["within_window"] else "OUTSIDE"
    return f"  [{mark} {lo:.3f}..{hi:.3f}]"


def _header(title, report):
    cfg = report.config
    prov = report.provenance
    lines = [title, SEPARATOR]
    lines.append(f"Scenario:      {cfg['scenario']} ({cfg['scale']} scale)")
    lines.append(f"Family:        {cfg['family']}   p={cfg['p']}   n={cfg['n']}   R={cfg['reps']}")
    lines.append(f"Seed:          {prov['seed']}")
    lines.append(f"Config hash:   {prov['config_hash']}   spec hash: {prov['spec_hash']}")
    lines.append(f"Version:       {prov['version']}")
    lines.append(SEPARATOR)
    return lines


def format_coverage(report):
    cfg = report.config
    lines = _header("EMPIRICAL COVERAGE REPORT", report)
    lines.append(f"\nMethod: {cfg['method']}   nominal level: {cfg['level']:.2f}\n")
    lines.append(f"   {'edge':<10}{'l':>3}{'truth':>10}{'coverage':>11}{'mean est':>11}{'mean width':>12}{'fail':>6}")
    for row in report.aggregates:
        lines.append(
            f"   {row['edge']:<10}{row['l']:>3}{row['truth']:>10.3f}{row['coverage']:>11.3f}"
            f"{_fmt(row['mean_estimate']):>11}{_fmt(row['mean_width']):>12}{row['failures']:>6}"
            + _window_note(row))
    failures = sum(row["failures"] for row in report.aggregates)
    lines.append("")
    lines.append(RULE)
    lines.append("Coverage = covered count / R; failed replications count as not covered.")
    if failures:
        lines.append(f"{failures} failed estimates recorded (see records.csv, column 'error').")
    return "\n".join(lines) + "\n"


def format_type1(report):
    cfg = report.config
    lines = _header("EMPIRICAL TYPE I ERROR REPORT", report)
    lines.append(f"\nNode tested: {cfg['node']}   alpha: {cfg['alpha']:.3f}   bootstrap draws: {cfg['B']}\n")
    for row in report.aggregates:
        lines.append(f"   {row['test']:<10} rejections {row['rejections']:>4} / {row['reps']:<4}"
                     f" rate {row['rate']:.3f}   failures {row['failures']}" + _window_note(row))
    lines.append("")
    lines.append(RULE)
    lines.append("Rate = rejections / R at the true parameters.")
    return "\n".join(lines) + "\n"


def format_diagnostics(report):
    lines = _header("SPARSITY DIAGNOSTICS REPORT", report)
    rows = [row for row in report.aggregates if "n" in row]
    if rows:
        stat = rows[0]["statistic"]
        if stat == "inverse_row_l1":
            lines.append("\nl1 norm of the target row of the exact inverse (mean and max over runs)\n")
        else:
            lines.append(f"\nSmall components of the unpenalized decorrelation vector "
                         f"(largest {report.config['drop_largest']} dropped; run-averaged mean and max)\n")
    for row in rows:
        lines.append(f"   n = {row['n']:>7}   mean {row['mean']:.4g}   max {row['max']:.4g}"
                     f"   runs {row['reps']}   failures {row['failures']}" + _window_note(row))
    trend = [row for row in report.aggregates if row.get("statistic") == "trend"]
    if trend:
        lines.append("")
        lines.append(RULE)
        verdict = "non-increasing" if trend[0]["non_increasing"] else "NOT monotone"
        lines.append(f"Trend of the mean over n: {verdict}")
    return "\n".join(lines) + "\n"


def format_experiment_report(report):
    formatters = {"coverage": format_coverage, "type1": format_type1, "diagnostics": format_diagnostics}
    return formatters[report.kind](report)


def format_graph_report(graph):
    """
    Text summary of a dataset analysis

    Args:
        graph (GraphReport): Analysis result

    Returns:
        str: Report text
    """
    lines = ["GRAPH ANALYSIS REPORT", SEPARATOR]
    lines.append(f"Family:     {graph.family}")
    lines.append(f"Samples:    n={graph.n}   nodes: p={graph.p}")
    lines.append(f"Threshold:  p-value < {graph.threshold:g}")
    lines.append(SEPARATOR)

    lines.append(f"\nSELECTED EDGES ({len(graph.selected)} of {len(graph.edges)})\n")
    if not graph.selected:
        lines.append("   No edge passes the threshold.")
    for row in graph.edges[graph.edges["selected"]].sort_values("p_value").itertuples():
        lines.append(f"   {row.name_a:>12} -- {row.name_b:<12} estimate {row.estimate:>9.4f}"
                     f"   CI [{row.lower:.4f}, {row.upper:.4f}]   p = {row.p_value:.2e}")

    lines.append("\n" + RULE)
    lines.append("NODE DEGREES\n")
    for name, degree in sorted(graph.degrees.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"   {name:>12}: {degree}")

    failed = graph.edges[graph.edges["status"] != "ok"]
    if len(failed):
        lines.append("\n" + RULE)
        lines.append(f"{len(failed)} edge(s) could not be estimated; see edge_estimates.csv.")
    return "\n".join(lines) + "\n"
