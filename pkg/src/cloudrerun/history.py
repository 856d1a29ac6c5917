"""Execution history: archive bundles, records, URLs, and queries.

Every completed execution leaves three things in the provider it ran on:

* ``executions/<id>/Config.zip``  -- the canonical request texts (personal
  part redacted) plus the captured engine configuration,
* ``executions/<id>/Result.zip``  -- the analytics output parts,
* one database record describing the run.

Input datasets are stored content-addressed under ``inputs/<sha256>`` so a
dataset shared by many executions is kept once.  An execution is referred
to by URL::

    rpac://<provider>/<store>/<execution_id>

Zip bundles are deterministic: stored (uncompressed) entries, sorted names,
a fixed timestamp.  Equal content means equal bytes, which is what makes
byte-level reproduction checks meaningful.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .config_model import REDACTED, parse_personal
from .errors import MalformedURL, NotFound, RedactionViolation, UnknownField
from .simcloud.provider import SimCloud

__all__ = [
    "URL_SCHEME",
    "find_record_table",
    "execution_url",
    "parse_url",
    "deterministic_zip",
    "read_zip",
    "dataset_content",
    "content_address",
    "ExportPlan",
    "FetchedExecution",
    "HistoryStore",
    "CONFIG_ENTRY_NAMES",
    "RECORD_FIELDS",
]

URL_SCHEME = "rpac"


def find_record_table(env: "SimCloud", provider_name: str, execution_id: str) -> Optional[str]:
    """Locate the database table holding an execution's record.  Tables are
    named per request, so lookup by URL scans the provider's tables."""
    provider = env.provider(provider_name)
    for table in sorted(provider.tables):
        for row in provider.tables[table]:
            if row.get("execution_id") == execution_id:
                return table
    return None

CONFIG_ENTRY_NAMES = ("application.ini", "engine.json", "personal.ini", "resources.ini")

# Queryable record fields; everything else is UnknownField.
RECORD_FIELDS = (
    "execution_id",
    "provider",
    "engine",
    "status",
    "mode",
)

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def execution_url(provider: str, store: str, execution_id: str) -> str:
    return f"{URL_SCHEME}://{provider}/{store}/{execution_id}"


def parse_url(url: str) -> tuple[str, str, str]:
    prefix = f"{URL_SCHEME}://"
    if not url.startswith(prefix):
        raise MalformedURL(f"expected {prefix}<provider>/<store>/<execution_id>, got {url!r}")
    parts = url[len(prefix):].split("/")
    if len(parts) != 3 or not all(parts):
        raise MalformedURL(f"expected {prefix}<provider>/<store>/<execution_id>, got {url!r}")
    return parts[0], parts[1], parts[2]


def deterministic_zip(entries: dict[str, bytes]) -> bytes:
    """Zip whose bytes depend only on entry names and contents."""
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o600 << 16
            zf.writestr(info, entries[name])
    return buffer.getvalue()


def read_zip(data: bytes) -> dict[str, bytes]:
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        return {name: zf.read(name) for name in zf.namelist()}


def dataset_content(uri: str) -> bytes:
    """Simulated dataset bytes: a pure function of the URI."""
    first = hashlib.sha256(b"dataset:" + uri.encode()).digest()
    return first + hashlib.sha256(first).digest()


def content_address(data: bytes) -> str:
    return f"inputs/{hashlib.sha256(data).hexdigest()}"


@dataclass
class ExportPlan:
    """Everything the export step will write, computed ahead of time so the
    operation count (and its simulated latency) is known up front."""

    config_key: str
    config_zip: bytes
    result_key: str
    result_zip: bytes
    new_inputs: dict[str, bytes]
    existing_inputs: list[str]

    @property
    def op_count(self) -> int:
        # config put + result put + record write + one put per new input
        return 3 + len(self.new_inputs)


@dataclass(frozen=True)
class FetchedExecution:
    url: str
    record: dict
    config: Optional[dict[str, bytes]]
    result: Optional[dict[str, bytes]]


class HistoryStore:
    """Archive and query interface over one provider's history storage."""

    def __init__(self, env: SimCloud, provider_name: str, store: str, table: str) -> None:
        self.env = env
        self.provider_name = provider_name
        self.store = store
        self.table = table

    @property
    def _provider(self):
        return self.env.provider(self.provider_name)

    # -- archiving ---------------------------------------------------------

    def _check_redacted(self, personal_ini: str) -> None:
        personal = parse_personal(personal_ini)
        for key, value in personal.cloud_credentials:
            if value != REDACTED:
                raise RedactionViolation(
                    f"credential {key!r} is not redacted in archived personal.ini"
                )

    def plan_export(
        self,
        execution_id: str,
        archive_texts: dict[str, str],
        engine_config: dict,
        result_entries: dict[str, bytes],
        datasets: list[str],
    ) -> ExportPlan:
        self._check_redacted(archive_texts["personal_ini"])
        config_zip = deterministic_zip(
            {
                "resources.ini": archive_texts["resources_ini"].encode(),
                "application.ini": archive_texts["application_ini"].encode(),
                "personal.ini": archive_texts["personal_ini"].encode(),
                "engine.json": (json.dumps(engine_config, sort_keys=True, indent=2) + "\n").encode(),
            }
        )
        result_zip = deterministic_zip(result_entries)

        new_inputs: dict[str, bytes] = {}
        existing: list[str] = []
        for uri in datasets:
            content = dataset_content(uri)
            address = content_address(content)
            if self._provider.storage_has(self.store, address):
                existing.append(address)
            elif address not in new_inputs:
                new_inputs[address] = content
        return ExportPlan(
            config_key=f"executions/{execution_id}/Config.zip",
            config_zip=config_zip,
            result_key=f"executions/{execution_id}/Result.zip",
            result_zip=result_zip,
            new_inputs=new_inputs,
            existing_inputs=existing,
        )

    def commit_export(self, execution_id: str, plan: ExportPlan, record: dict) -> str:
        provider = self._provider
        provider.storage_put(self.store, plan.config_key, plan.config_zip, execution_id)
        provider.storage_put(self.store, plan.result_key, plan.result_zip, execution_id)
        for address in sorted(plan.new_inputs):
            provider.storage_put(self.store, address, plan.new_inputs[address], execution_id)
        url = execution_url(self.provider_name, self.store, execution_id)
        record = dict(record)
        record["execution_id"] = execution_id
        record["history_url"] = url
        record["config_key"] = plan.config_key
        record["result_key"] = plan.result_key
        record["input_keys"] = sorted(plan.new_inputs) + sorted(plan.existing_inputs)
        provider.db_put(self.table, record, execution_id)
        return url

    def put_record(self, execution_id: str, record: dict) -> str:
        """Write or update an execution record without bundles."""
        record = dict(record)
        record["execution_id"] = execution_id
        record.setdefault(
            "history_url", execution_url(self.provider_name, self.store, execution_id)
        )
        self._provider.db_put(self.table, record, execution_id)
        return record["history_url"]

    def get_record(self, execution_id: str) -> Optional[dict]:
        rows = self._provider.db_query(
            self.table, {"execution_id": execution_id}, execution_id
        )
        return rows[0] if rows else None

    # -- retrieval ---------------------------------------------------------

    def fetch(self, url: str) -> FetchedExecution:
        provider_name, store, execution_id = parse_url(url)
        if provider_name != self.provider_name or store != self.store:
            raise NotFound(f"{url!r} does not live in this store")
        record = self.get_record(execution_id)
        if record is None:
            raise NotFound(f"no execution record for {url!r}")
        config = result = None
        config_key = record.get("config_key")
        if config_key and self._provider.storage_has(store, config_key):
            config = read_zip(self._provider.storage_get(store, config_key, execution_id))
        result_key = record.get("result_key")
        if result_key and self._provider.storage_has(store, result_key):
            result = read_zip(self._provider.storage_get(store, result_key, execution_id))
        return FetchedExecution(url=url, record=record, config=config, result=result)

    def query(self, filters: dict) -> list[dict]:
        """Equality filtering on record fields, ordered by submit time."""
        for key in filters:
            if key not in RECORD_FIELDS:
                raise UnknownField(
                    f"unknown query field {key!r}; queryable: {', '.join(RECORD_FIELDS)}"
                )
        rows = self._provider.db_query(self.table, dict(filters), "query")
        return sorted(
            rows,
            key=lambda r: (Fraction(r.get("submitted_at", "0")), r.get("execution_id", "")),
        )
