"""CSV ingestion and export for transaction, label, and annotation files."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .types import ClientSequence, Dataset

__all__ = [
    "ingest_csv",
    "write_transactions_csv",
    "load_labels",
    "write_labels_csv",
    "load_local_labels",
    "write_local_labels_csv",
    "load_change_points",
    "write_change_points_csv",
    "attach_annotations",
]

TRANSACTIONS_HEADER = ["client_id", "timestamp", "mcc", "amount"]


class IngestError(ValueError):
    pass


def ingest_csv(path) -> Dataset:
    """Load `client_id,timestamp,mcc,amount` rows into a Dataset.

    Rows are grouped by client and stably sorted by timestamp; out-of-order
    input is tolerated with a warning. Malformed rows raise with their
    1-based line number. The vocabulary is left unfitted.
    """
    path = Path(path)
    groups: dict[str, list[tuple[int, int, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        if [h.strip() for h in header] != TRANSACTIONS_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(TRANSACTIONS_HEADER)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise IngestError(f"{path} line {lineno}: expected 4 fields, got {len(row)}")
            cid = row[0].strip()
            if not cid:
                raise IngestError(f"{path} line {lineno}: empty client_id")
            try:
                ts = int(row[1])
                mcc = int(row[2])
                amount = float(row[3])
            except ValueError as e:
                raise IngestError(f"{path} line {lineno}: {e}") from None
            groups.setdefault(cid, []).append((ts, mcc, amount))
    if not groups:
        raise IngestError(f"{path}: no transaction records")

    clients = []
    unsorted_clients = 0
    for cid in sorted(groups):
        rows = groups[cid]
        ts = np.array([r[0] for r in rows], dtype=np.int64)
        order = np.argsort(ts, kind="stable")
        if np.any(np.diff(ts) < 0):
            unsorted_clients += 1
            rows = [rows[i] for i in order]
            ts = ts[order]
        clients.append(
            ClientSequence(
                client_id=cid,
                timestamps=ts,
                mcc=np.array([r[1] for r in rows], dtype=np.int64),
                amounts=np.array([r[2] for r in rows], dtype=np.float64),
            )
        )
    if unsorted_clients:
        warnings.warn(
            f"{path}: reordered out-of-order timestamps for {unsorted_clients} client(s)",
            stacklevel=2,
        )
    return Dataset(clients=clients, provenance="csv")


def write_transactions_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRANSACTIONS_HEADER)
        for seq in dataset.clients:
            for i in range(len(seq)):
                writer.writerow(
                    [seq.client_id, int(seq.timestamps[i]), int(seq.mcc[i]),
                     repr(float(seq.amounts[i]))]
                )


def _read_two_column(path, header: list[str], caster) -> dict:
    path = Path(path)
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        if [h.strip() for h in got] != header:
            raise IngestError(
                f"{path}: expected header {','.join(header)}, got {','.join(got)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestError(
                    f"{path} line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                caster(out, row)
            except ValueError as e:
                raise IngestError(f"{path} line {lineno}: {e}") from None
    return out


def load_labels(path) -> dict[str, int]:
    """Read `client_id,label` into a dict."""

    def cast(out, row):
        out[row[0].strip()] = int(row[1])

    return _read_two_column(path, ["client_id", "label"], cast)


def write_labels_csv(labels: dict[str, int], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client_id", "label"])
        for cid in sorted(labels):
            writer.writerow([cid, int(labels[cid])])


def load_local_labels(path) -> dict[str, list[tuple[int, int]]]:
    """Read `client_id,txn_index,label` into per-client index/label pairs."""

    def cast(out, row):
        out.setdefault(row[0].strip(), []).append((int(row[1]), int(row[2])))

    return _read_two_column(path, ["client_id", "txn_index", "label"], cast)


def write_local_labels_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client_id", "txn_index", "label"])
        for seq in dataset.clients:
            if seq.local_labels is None:
                continue
            for i, lab in enumerate(seq.local_labels):
                writer.writerow([seq.client_id, i, int(lab)])


def load_change_points(path) -> dict[str, int]:
    """Read `client_id,txn_index` planted change points."""

    def cast(out, row):
        out[row[0].strip()] = int(row[1])

    return _read_two_column(path, ["client_id", "txn_index"], cast)


def write_change_points_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client_id", "txn_index"])
        for seq in dataset.clients:
            if seq.change_point is not None:
                writer.writerow([seq.client_id, int(seq.change_point)])


def attach_annotations(
    dataset: Dataset,
    labels: dict[str, int] | None = None,
    local_labels: dict[str, list[tuple[int, int]]] | None = None,
    change_points: dict[str, int] | None = None,
) -> Dataset:
    """Return a copy of `dataset` with label/annotation columns filled in."""
    out = []
    for seq in dataset.clients:
        glob = seq.global_label
        if labels is not None:
            glob = labels.get(seq.client_id, glob)
        loc = seq.local_labels
        if local_labels is not None and seq.client_id in local_labels:
            arr = np.zeros(len(seq), dtype=np.int64)
            for idx, lab in local_labels[seq.client_id]:
                if not 0 <= idx < len(seq):
                    raise IngestError(
                        f"local label index {idx} out of range for client "
                        f"{seq.client_id} (length {len(seq)})"
                    )
                arr[idx] = lab
            loc = arr
        cp = seq.change_point
        if change_points is not None:
            cp = change_points.get(seq.client_id, cp)
        out.append(
            ClientSequence(
                client_id=seq.client_id,
                timestamps=seq.timestamps,
                mcc=seq.mcc,
                amounts=seq.amounts,
                mcc_idx=seq.mcc_idx,
                global_label=glob,
                local_labels=loc,
                change_point=cp,
            )
        )
    return Dataset(clients=out, vocab=dataset.vocab, provenance=dataset.provenance)
