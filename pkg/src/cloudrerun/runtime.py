"""Event-triggered pipeline lifecycle over the simulated cloud.

A deployed pipeline moves through

    Submitted -> Provisioning -> SoftwareSetup -> Executing -> Exporting
              -> Terminating -> Completed

with Failed reachable from any non-terminal state.  Progress is driven by
events: hardware readiness triggers software setup, software readiness
triggers analytics, the first analytics output object triggers export, and
export completion triggers termination.

Delivery is at-least-once, so processing is made exactly-once by two
mechanisms: the bus drops events whose id was already seen, and every
handler is guarded by the state machine, turning distinct-but-late events
into no-ops.

Two execution modes share all stage logic.  Serverless mode consumes the
event stream.  SDK mode ignores it and instead polls on a fixed tick grid
anchored at submission: each stage starts at the first tick at or after
its precondition became true, so the wall-clock difference between the
modes is exactly the sum of per-stage alignment residues.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

from .caam import EXPORT_PREFIX, FUNCTION_NAMES, PipelineDocument, SCHEMA_VERSION
from .config_model import AbstractRequest, parse_abstract_request
from .engines import capture_engine_config
from .errors import (
    AnalyticsFailure,
    CloudRerunError,
    DeploymentRejected,
    MalformedValue,
    StorageFailure,
)
from .history import HistoryStore
from .simcloud.provider import Cluster, Event, SimCloud
from .simcloud.workload import parse_workload, workload_duration, workload_result

__all__ = [
    "ExecutionState",
    "STAGES",
    "WORKSPACE_STORE",
    "InstalledRule",
    "EventBus",
    "PipelineInstance",
    "ExecutionOutcome",
    "Orchestrator",
]

WORKSPACE_STORE = "analytics-workspace"


class ExecutionState(str, Enum):
    SUBMITTED = "Submitted"
    PROVISIONING = "Provisioning"
    SOFTWARE_SETUP = "SoftwareSetup"
    EXECUTING = "Executing"
    EXPORTING = "Exporting"
    TERMINATING = "Terminating"
    COMPLETED = "Completed"
    FAILED = "Failed"


TERMINAL_STATES = (ExecutionState.COMPLETED, ExecutionState.FAILED)

# Stage names used as timing keys, in lifecycle order.
STAGES = ("Provisioning", "SoftwareSetup", "Executing", "Exporting", "Terminating")


@dataclass(frozen=True)
class InstalledRule:
    """A trigger bound to a concrete execution instance."""

    function: str
    instance_id: str
    source: str
    event: str
    match: str  # "exact" or "prefix"

    def matches(self, event: Event) -> bool:
        if event.source != self.source:
            return False
        if self.match == "prefix":
            return event.name.startswith(self.event)
        return event.name == self.event


class EventBus:
    """FIFO queue with id-based deduplication and rule dispatch."""

    def __init__(self) -> None:
        self.queue: deque[Event] = deque()
        self.seen: set[str] = set()
        self.rules: list[tuple[InstalledRule, Callable[["PipelineInstance", Event], bool]]] = []
        self.dropped: list[Event] = []

    def enqueue(self, event: Event) -> None:
        self.queue.append(event)

    def install(
        self,
        rule: InstalledRule,
        handler: Callable[["PipelineInstance", Event], bool],
        instance: "PipelineInstance",
    ) -> None:
        self.rules.append((rule, lambda inst_event, _i=instance: handler(_i, inst_event)))

    def dispatch(self, event: Event) -> list[str]:
        """Process one event; returns the names of functions that acted."""
        if event.event_id in self.seen:
            return []
        self.seen.add(event.event_id)
        acted = []
        matched = False
        for rule, handler in self.rules:
            if rule.matches(event):
                matched = True
                if handler(event):
                    acted.append(rule.function)
        if not matched:
            self.dropped.append(event)
        return acted

    def dispatch_next(self) -> Optional[list[str]]:
        if not self.queue:
            return None
        return self.dispatch(self.queue.popleft())


@dataclass
class PipelineInstance:
    instance_id: str
    provider_name: str
    doc: PipelineDocument
    request: AbstractRequest
    mode: str
    record_history: bool
    poll_window: Optional[Fraction] = None
    extra_parameters: dict = field(default_factory=dict)

    state: ExecutionState = ExecutionState.SUBMITTED
    submitted_at: Optional[Fraction] = None
    ended_at: Optional[Fraction] = None
    failure: Optional[str] = None
    transitions: list[tuple[Fraction, str, str]] = field(default_factory=list)
    stage_timings: dict[str, tuple[Optional[Fraction], Optional[Fraction]]] = field(
        default_factory=dict
    )

    cluster: Optional[Cluster] = None
    network_id: Optional[str] = None
    software_ready_at: Optional[Fraction] = None
    analytics_done_at: Optional[Fraction] = None
    export_done_at: Optional[Fraction] = None
    terminated_at: Optional[Fraction] = None
    result_keys: list[str] = field(default_factory=list)
    history_url: Optional[str] = None
    record: Optional[dict] = None

    @property
    def source(self) -> str:
        return f"{self.provider_name}:instance:{self.instance_id}"

    @property
    def node_count(self) -> int:
        block = self.request.resources.provider_block(self.provider_name)
        return block.instance_number if block is not None else 1

    @property
    def engine(self) -> str:
        return self.request.resources.bigdata_engine.value


@dataclass(frozen=True)
class ExecutionOutcome:
    instance_id: str
    provider: str
    engine: str
    mode: str
    state: ExecutionState
    submitted_at: Fraction
    ended_at: Fraction
    stage_timings: dict[str, tuple[Fraction, Fraction]]
    result_keys: tuple[str, ...]
    history_url: Optional[str]
    record: Optional[dict]
    failure: Optional[str]

    @property
    def duration_s(self) -> Fraction:
        return self.ended_at - self.submitted_at

    def to_json(self) -> str:
        payload = {
            "instance_id": self.instance_id,
            "provider": self.provider,
            "engine": self.engine,
            "mode": self.mode,
            "state": self.state.value,
            "submitted_at": str(self.submitted_at),
            "ended_at": str(self.ended_at),
            "duration_s": str(self.duration_s),
            "stage_timings": {
                name: [str(start), str(end)]
                for name, (start, end) in self.stage_timings.items()
            },
            "result_keys": list(self.result_keys),
            "history_url": self.history_url,
            "failure": self.failure,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


class Orchestrator:
    """Deploys pipeline documents against a simulated environment and runs
    them to completion in either execution mode."""

    def __init__(self, env: SimCloud) -> None:
        self.env = env
        self.bus = EventBus()
        self.env.subscribe(self.bus.enqueue)
        self.instances: dict[str, PipelineInstance] = {}

    # -- deployment --------------------------------------------------------

    def deploy(
        self,
        doc: PipelineDocument,
        mode: str = "serverless",
        record_history: bool = True,
        poll_window: Optional[Fraction] = None,
        install_rules: bool = True,
        extra_parameters: Optional[dict] = None,
    ) -> PipelineInstance:
        body = doc.body
        if body.get("schema_version") != SCHEMA_VERSION:
            raise DeploymentRejected(
                f"unsupported schema_version {body.get('schema_version')!r}"
            )
        if doc.provider not in self.env.providers:
            raise DeploymentRejected(f"no simulated provider {doc.provider!r}")
        functions = body.get("functions", [])
        names = [f.get("name") for f in functions]
        if sorted(names) != sorted(FUNCTION_NAMES):
            raise DeploymentRejected(
                f"expected exactly the functions {FUNCTION_NAMES}, got {names}"
            )
        rules = body.get("rules", [])
        ruled = sorted(r.get("function") for r in rules)
        if ruled != sorted(FUNCTION_NAMES):
            raise DeploymentRejected("expected exactly one trigger rule per function")
        archive = body.get("archive", {})
        try:
            request = parse_abstract_request(
                archive["resources_ini"], archive["application_ini"], archive["personal_ini"]
            )
        except (KeyError, CloudRerunError) as exc:
            raise DeploymentRejected(f"archive section unusable: {exc}") from exc

        provider = self.env.provider(doc.provider)
        instance = PipelineInstance(
            instance_id=provider._next_id("exec"),
            provider_name=doc.provider,
            doc=doc,
            request=request,
            mode=mode,
            record_history=record_history,
            poll_window=poll_window,
            extra_parameters=dict(extra_parameters or {}),
        )
        self.instances[instance.instance_id] = instance
        if install_rules:
            self._install_rules(instance)
        return instance

    def _install_rules(self, instance: PipelineInstance) -> None:
        storage_source = f"{instance.provider_name}:objectstore:{WORKSPACE_STORE}"
        bindings = [
            ("software_env_setup", instance.source, "HardwareEnvReady", "exact", self._begin_software_setup),
            ("run_analytics", instance.source, "SoftwareEnvReady", "exact", self._begin_analytics),
            ("export_execution", storage_source, f"{EXPORT_PREFIX}{instance.instance_id}/", "prefix", self._begin_export),
            ("terminate_resources", instance.source, "ExportComplete", "exact", self._begin_terminate),
        ]
        for function, source, event, match, handler in bindings:
            rule = InstalledRule(
                function=function,
                instance_id=instance.instance_id,
                source=source,
                event=event,
                match=match,
            )
            self.bus.install(rule, lambda inst, ev, h=handler: h(inst), instance)

    # -- state machine -----------------------------------------------------

    def _transition(self, inst: PipelineInstance, to: ExecutionState) -> None:
        now = self.env.clock.now()
        inst.transitions.append((now, inst.state.value, to.value))
        inst.state = to

    def _open_stage(self, inst: PipelineInstance, stage: str) -> None:
        inst.stage_timings[stage] = (self.env.clock.now(), None)

    def _close_stage(self, inst: PipelineInstance, stage: str) -> None:
        timing = inst.stage_timings.get(stage)
        if timing and timing[1] is None:
            inst.stage_timings[stage] = (timing[0], self.env.clock.now())

    def _close_open_stages(self, inst: PipelineInstance) -> None:
        for stage in STAGES:
            self._close_stage(inst, stage)

    def start(self, inst: PipelineInstance) -> None:
        """Begin hardware provisioning."""
        if inst.state is not ExecutionState.SUBMITTED:
            return
        inst.submitted_at = self.env.clock.now()
        self._transition(inst, ExecutionState.PROVISIONING)
        self._open_stage(inst, "Provisioning")
        provider = self.env.provider(inst.provider_name)
        block = inst.request.resources.provider_block(inst.provider_name)
        network_id = provider.create_network(inst.instance_id)
        inst.network_id = network_id
        try:
            inst.cluster = provider.create_cluster(
                block.instance_type, block.instance_number, network_id, inst.instance_id
            )
        except CloudRerunError:
            provider.delete_network(network_id)
            inst.network_id = None
            raise

    def _begin_software_setup(self, inst: PipelineInstance) -> bool:
        if inst.state is not ExecutionState.PROVISIONING:
            return False
        if inst.cluster is None or inst.cluster.state != "Ready":
            return False
        self._close_stage(inst, "Provisioning")
        self._transition(inst, ExecutionState.SOFTWARE_SETUP)
        self._open_stage(inst, "SoftwareSetup")
        provider = self.env.provider(inst.provider_name)
        try:
            provider.resolve_image(inst.request.application.docker_image)
        except CloudRerunError as exc:
            self._fail(inst, exc)
            return True
        delay = self.env.delays.image_pull_s + self.env.delays.bootstrap_cmd_s * len(
            inst.request.application.bootstrap
        )

        def done() -> None:
            if inst.state is not ExecutionState.SOFTWARE_SETUP:
                return
            inst.software_ready_at = self.env.clock.now()
            self.env.emit(inst.source, "SoftwareEnvReady", "lifecycle")

        self.env.schedule_in(delay, done)
        return True

    def _begin_analytics(self, inst: PipelineInstance) -> bool:
        if inst.state is not ExecutionState.SOFTWARE_SETUP or inst.software_ready_at is None:
            return False
        self._close_stage(inst, "SoftwareSetup")
        self._transition(inst, ExecutionState.EXECUTING)
        self._open_stage(inst, "Executing")
        try:
            profile = parse_workload(inst.request.application.command)
        except CloudRerunError as exc:
            self._fail(inst, exc)
            return True
        duration = workload_duration(profile, inst.node_count)

        def done() -> None:
            if inst.state is not ExecutionState.EXECUTING:
                return
            if profile.exit_code != 0:
                self._fail(
                    inst,
                    AnalyticsFailure(f"command exited with code {profile.exit_code}"),
                )
                return
            self._write_results(inst, profile)

        self.env.schedule_in(duration, done)
        return True

    def _write_results(self, inst: PipelineInstance, profile) -> None:
        provider = self.env.provider(inst.provider_name)
        base = workload_result(
            profile.seed,
            inst.request.application.command,
            inst.request.application.data_uri,
            inst.node_count,
            profile.parallelism,
        )
        inst.analytics_done_at = self.env.clock.now()
        prefix = f"{EXPORT_PREFIX}{inst.instance_id}/"
        keys = []
        try:
            for k in range(inst.node_count):
                key = f"{prefix}part-{k:04d}"
                chunk = base + k.to_bytes(4, "big")
                provider.storage_put(WORKSPACE_STORE, key, chunk, inst.instance_id)
                keys.append(key)
            manifest = {
                "parts": [key.rsplit("/", 1)[1] for key in keys],
                "nodes": inst.node_count,
                "parallelism": profile.parallelism,
            }
            provider.storage_put(
                WORKSPACE_STORE,
                f"{prefix}manifest.json",
                (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode(),
                inst.instance_id,
            )
        except CloudRerunError as exc:
            self._fail(inst, exc)
            return
        inst.result_keys = keys + [f"{prefix}manifest.json"]

    def _begin_export(self, inst: PipelineInstance) -> bool:
        if inst.state is not ExecutionState.EXECUTING or inst.analytics_done_at is None:
            return False
        self._close_stage(inst, "Executing")
        self._transition(inst, ExecutionState.EXPORTING)
        self._open_stage(inst, "Exporting")

        if not inst.record_history:
            def done_skip() -> None:
                if inst.state is not ExecutionState.EXPORTING:
                    return
                inst.export_done_at = self.env.clock.now()
                self.env.emit(inst.source, "ExportComplete", "lifecycle")

            self.env.schedule_in(Fraction(0), done_skip)
            return True

        history = self._history_for(inst)
        provider = self.env.provider(inst.provider_name)
        try:
            entries = {}
            for key in inst.result_keys:
                entries[key.rsplit("/", 1)[1]] = provider.storage_get(
                    WORKSPACE_STORE, key, inst.instance_id
                )
            plan = history.plan_export(
                inst.instance_id,
                inst.doc.body["archive"],
                capture_engine_config(inst.request),
                entries,
                list(inst.request.application.data_uri),
            )
        except CloudRerunError as exc:
            self._fail(inst, exc)
            return True

        delay = self.env.delays.history_op_s * plan.op_count

        def done() -> None:
            if inst.state is not ExecutionState.EXPORTING:
                return
            try:
                inst.history_url = history.commit_export(
                    inst.instance_id, plan, self._build_record(inst, provisional=True)
                )
                inst.record = history.get_record(inst.instance_id)
            except CloudRerunError as exc:
                self._fail(inst, exc)
                return
            inst.export_done_at = self.env.clock.now()
            self.env.emit(inst.source, "ExportComplete", "lifecycle")

        self.env.schedule_in(delay, done)
        return True

    def _begin_terminate(self, inst: PipelineInstance) -> bool:
        if inst.state is not ExecutionState.EXPORTING or inst.export_done_at is None:
            return False
        self._close_stage(inst, "Exporting")
        self._transition(inst, ExecutionState.TERMINATING)
        self._open_stage(inst, "Terminating")
        self._schedule_terminate(inst)
        return True

    def _schedule_terminate(self, inst: PipelineInstance) -> None:
        def done() -> None:
            if inst.state is not ExecutionState.TERMINATING:
                return
            self._finish(inst)

        self.env.schedule_in(self.env.delays.terminate_s, done)

    def _finish(self, inst: PipelineInstance) -> None:
        provider = self.env.provider(inst.provider_name)
        if inst.cluster is not None:
            provider.delete_cluster(inst.cluster.cluster_id)
        if inst.network_id is not None:
            provider.delete_network(inst.network_id)
        now = self.env.clock.now()
        for entry in self.env.ledger.open_entries(scope=inst.instance_id):
            entry.close_time = now
        inst.terminated_at = now
        inst.ended_at = now
        final = ExecutionState.FAILED if inst.failure else ExecutionState.COMPLETED
        self._close_open_stages(inst)
        self._transition(inst, final)
        if inst.record_history:
            self._finalize_record(inst)

    def _fail(self, inst: PipelineInstance, exc: Exception) -> None:
        if inst.failure is None:
            inst.failure = f"{type(exc).__name__}: {exc}"
        if inst.state in TERMINAL_STATES or inst.state is ExecutionState.TERMINATING:
            return
        for stage in STAGES[:-1]:
            self._close_stage(inst, stage)
        self._transition(inst, ExecutionState.TERMINATING)
        self._open_stage(inst, "Terminating")
        self._schedule_terminate(inst)

    # -- history glue ------------------------------------------------------

    def _history_for(self, inst: PipelineInstance) -> HistoryStore:
        reproduce = inst.request.resources.reproduce
        return HistoryStore(
            self.env,
            inst.provider_name,
            reproduce.reproduce_storage,
            reproduce.reproduce_database,
        )

    def _build_record(self, inst: PipelineInstance, provisional: bool) -> dict:
        block = inst.request.resources.provider_block(inst.provider_name)
        status = "Completed-pending-termination" if provisional else inst.state.value
        parameters = {
            "instance_type": block.instance_type,
            "instance_number": block.instance_number,
            "region": block.region,
            "docker_image": inst.request.application.docker_image,
            "command": inst.request.application.command,
        }
        if inst.poll_window is not None:
            parameters["poll_window_s"] = str(inst.poll_window)
        parameters.update(inst.extra_parameters)
        return {
            "provider": inst.provider_name,
            "engine": inst.engine,
            "mode": inst.mode,
            "status": status,
            "submitted_at": str(inst.submitted_at),
            "parameters": parameters,
            "failure": inst.failure,
        }

    def _finalize_record(self, inst: PipelineInstance) -> None:
        history = self._history_for(inst)
        record = history.get_record(inst.instance_id)
        if record is None:
            record = self._build_record(inst, provisional=False)
            record["config_key"] = None
            record["result_key"] = None
            record["input_keys"] = []
        record["status"] = inst.state.value
        record["failure"] = inst.failure
        record["ended_at"] = str(inst.ended_at)
        record["stage_timings"] = {
            name: [str(start), str(end)]
            for name, (start, end) in inst.stage_timings.items()
            if start is not None and end is not None
        }
        inst.history_url = history.put_record(inst.instance_id, record)
        inst.record = history.get_record(inst.instance_id)

    # -- execution modes ---------------------------------------------------

    def _outcome(self, inst: PipelineInstance) -> ExecutionOutcome:
        return ExecutionOutcome(
            instance_id=inst.instance_id,
            provider=inst.provider_name,
            engine=inst.engine,
            mode=inst.mode,
            state=inst.state,
            submitted_at=inst.submitted_at,
            ended_at=inst.ended_at,
            stage_timings={
                name: (start, end)
                for name, (start, end) in inst.stage_timings.items()
                if start is not None and end is not None
            },
            result_keys=tuple(inst.result_keys),
            history_url=inst.history_url,
            record=inst.record,
            failure=inst.failure,
        )

    def run_serverless(
        self,
        doc: PipelineDocument,
        record_history: bool = True,
        extra_parameters: Optional[dict] = None,
    ) -> ExecutionOutcome:
        inst = self.deploy(
            doc,
            mode="serverless",
            record_history=record_history,
            extra_parameters=extra_parameters,
        )
        self.start(inst)
        while inst.state not in TERMINAL_STATES:
            if self.bus.queue:
                self.bus.dispatch_next()
                continue
            if not self.env.run_next_completion():
                raise CloudRerunError(
                    f"{inst.instance_id} stalled in state {inst.state.value}"
                )
        while self.bus.queue:
            self.bus.dispatch_next()
        return self._outcome(inst)

    def run_sdk(
        self,
        doc: PipelineDocument,
        poll_window: Fraction = Fraction(10),
        record_history: bool = True,
        extra_parameters: Optional[dict] = None,
    ) -> ExecutionOutcome:
        poll_window = Fraction(poll_window)
        if poll_window <= 0:
            raise MalformedValue(f"poll window must be positive, got {poll_window}")
        inst = self.deploy(
            doc,
            mode="sdk",
            record_history=record_history,
            poll_window=poll_window,
            install_rules=False,
            extra_parameters=extra_parameters,
        )
        self.start(inst)
        submit = inst.submitted_at

        def observe(ready_at: Fraction) -> Fraction:
            """Advance to the first poll tick at or after ``ready_at``."""
            ticks = math.ceil((ready_at - submit) / poll_window)
            tick = submit + max(0, ticks) * poll_window
            if tick > self.env.clock.now():
                self.env.clock.advance_to(tick)
            return tick

        def wait(ready) -> bool:
            """Run completions until the condition holds or the run dies."""
            while ready() is None:
                if inst.state is ExecutionState.TERMINATING or inst.state in TERMINAL_STATES:
                    return False
                if not self.env.run_next_completion():
                    raise CloudRerunError(
                        f"{inst.instance_id} stalled in state {inst.state.value}"
                    )
            return True

        steps = [
            (lambda: inst.cluster.ready_at if inst.cluster else None, self._begin_software_setup),
            (lambda: inst.software_ready_at, self._begin_analytics),
            (lambda: inst.analytics_done_at, self._begin_export),
            (lambda: inst.export_done_at, self._begin_terminate),
        ]
        for ready, begin in steps:
            if inst.state is ExecutionState.TERMINATING or inst.state in TERMINAL_STATES:
                break
            if not wait(ready):
                break
            observe(ready())
            begin(inst)

        while inst.state not in TERMINAL_STATES:
            if not self.env.run_next_completion():
                raise CloudRerunError(
                    f"{inst.instance_id} stalled in state {inst.state.value}"
                )
        # The outcome ends at the poll that observes termination, not at the
        # termination instant itself.
        inst.ended_at = observe(inst.terminated_at)
        self.bus.queue.clear()
        if inst.record_history:
            self._finalize_record(inst)
        return self._outcome(inst)
