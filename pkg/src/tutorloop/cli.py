"""Command line: serve, validate, simulate, experiment, train-policy."""

from __future__ import annotations

import os
import random
import sys
from pathlib import Path

import click

from .content import ContentError, load_course, validate_course
from .data import data_path


@click.group()
def main() -> None:
    """Dialogue tutoring engine and its experiment harness."""


@main.command()
@click.argument("bundle_dir", type=click.Path(exists=True))
@click.option("--lenient", is_flag=True, help="Accept unknown keys in the bundle.")
def validate(bundle_dir: str, lenient: bool) -> None:
    """Validate a course bundle and report findings."""
    try:
        course = load_course(bundle_dir, lenient=lenient)
    except ContentError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    report = validate_course(course)
    for finding in report.findings:
        click.echo(f"{finding.severity.value}: [{finding.code}] {finding.message}")
    click.echo(f"{course.id}: {len(report.errors)} error(s), {len(report.warnings)} warning(s)")
    sys.exit(0 if report.ok() else 1)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--content-dir", type=click.Path(exists=True),
              default=str(data_path("courses")), show_default=True)
@click.option("--policy-snapshot", type=click.Path(), default=None,
              help="Load this policy snapshot at startup; rewritten on shutdown.")
@click.option("--log-path", type=click.Path(), default="tutorloop-events.jsonl",
              show_default=True, help="Event log (KORBIT_LOG_PATH overrides).")
def serve(port: int, host: str, content_dir: str, policy_snapshot: str | None,
          log_path: str) -> None:
    """Run the HTTP session service."""
    import uvicorn

    from .api import create_app
    from .policy import load_policy, save_policy
    from .service import TutorService

    log_path = os.environ.get("KORBIT_LOG_PATH", log_path)
    policy = None
    if policy_snapshot and Path(policy_snapshot).exists():
        policy = load_policy(policy_snapshot)
    service = TutorService(content_dir=content_dir, log_path=log_path, policy=policy)
    app = create_app(service)
    try:
        uvicorn.run(app, host=host, port=port)
    finally:
        if policy_snapshot:
            save_policy(service._policy, policy_snapshot)
        service.close()


@main.command()
@click.option("--course", "course_dir", type=click.Path(exists=True),
              default=str(data_path("courses", "ml-basics")), show_default=True)
@click.option("--population", type=click.Path(exists=True),
              default=str(data_path("populations", "effectful.json")), show_default=True)
@click.option("--variant", type=click.Choice(["full_its", "xmooc_its"]), default="full_its")
@click.option("--n", "n_students", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--session-cap-s", default=2700.0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write session records (JSONL).")
def simulate(course_dir: str, population: str, variant: str, n_students: int,
             seed: int, session_cap_s: float, out: str | None) -> None:
    """Simulate sessions for a sampled student population."""
    from .matcher import TfidfMatcher
    from .policy import PolicyModel
    from .simulator import PopulationConfig, SimDeps, Variant, simulate_session

    course = load_course(course_dir)
    config = PopulationConfig.load(population)
    deps = SimDeps(matcher=TfidfMatcher(course), policy=PolicyModel(),
                   session_cap_s=session_cap_s)
    lines: list[str] = []
    for i in range(n_students):
        model = config.sample_student(course.skill_ids(), random.Random(f"{seed}:pop:{i}"), seed=i)
        log = simulate_session(
            model, Variant(variant), course, deps,
            rng=random.Random(f"{seed}:beh:{i}"),
            student_id=f"s{i:04d}", session_id=f"sess{i:04d}")
        lines.append(log.to_jsonl())
        click.echo(
            f"{log.student_id}: {log.total_time_s / 60:.1f} min, "
            f"{log.n_correct}/{log.n_attempts} attempts correct, "
            f"{len(log.triples)} intervention(s)")
    if out:
        Path(out).write_text("".join(lines), encoding="utf-8")
        click.echo(f"wrote {out}")


@main.command()
@click.option("--n", "n_participants", default=612, show_default=True)
@click.option("--split", default=0.8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--population", type=click.Path(exists=True),
              default=str(data_path("populations", "effectful.json")), show_default=True)
@click.option("--course", "course_dir", type=click.Path(exists=True),
              default=str(data_path("courses", "ml-basics")), show_default=True)
@click.option("--session-cap-s", default=2700.0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write the report JSON here.")
def experiment(n_participants: int, split: float, seed: int, population: str,
               course_dir: str, session_cap_s: float, out: str | None) -> None:
    """Run the A/B protocol on a simulated population and print the table."""
    from .experiment import load_experiment_config, run_experiment

    config = load_experiment_config(
        course_dir, population, n_participants=n_participants,
        assignment_split=split, seed=seed, session_cap_s=session_cap_s)
    report = run_experiment(config)

    header = f"{'System':12s} {'Time Spent':>16s} {'Returning':>16s} {'Will Refer':>16s} {'Learning Gain':>16s}"
    click.echo(header)
    sig = report.significance
    for name in ("xmooc_its", "full_its"):
        row = report.variants[name]
        def cell(mean: float, half: float, metric: str) -> str:
            mark = sig[metric]["mark"] if name == "full_its" else ""
            return f"{mean:7.2f} ±{half:5.2f}{mark:2s}"
        click.echo(
            f"{name:12s} {cell(row.time_spent_min, row.time_spent_halfwidth, 'time_spent')} "
            f"{cell(row.returning_pct, row.returning_halfwidth, 'returning')} "
            f"{cell(row.will_refer_pct, row.will_refer_halfwidth, 'will_refer')} "
            f"{cell(row.learning_gain_pct, row.learning_gain_halfwidth, 'learning_gain')}")
    click.echo(f"{'pooled gain':12s} {report.pooled_learning_gain_pct:7.2f} "
               f"±{report.pooled_learning_gain_halfwidth:5.2f}")
    if out:
        Path(out).write_text(report.to_json(), encoding="utf-8")
        click.echo(f"wrote {out}")


@main.command("train-policy")
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def train_policy(log_path: str, out_path: str) -> None:
    """Replay an event log into a policy snapshot."""
    from .eventlog import CorruptLogError, replay_log_file
    from .policy import save_policy

    try:
        model = replay_log_file(log_path)
    except CorruptLogError as exc:
        click.echo(f"error: corrupt log: {exc}", err=True)
        sys.exit(1)
    save_policy(model, out_path)
    click.echo(f"trained on {model.update_count} update(s); wrote {out_path}")


if __name__ == "__main__":
    main()
