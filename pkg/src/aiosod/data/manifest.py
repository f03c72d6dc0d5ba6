"""Tab-separated dataset manifests.

One record per line::

    dataset_id <TAB> modality <TAB> rgb_path <TAB> aux_path or - <TAB> gt_path

Relative paths are resolved against the manifest's directory. Blank lines and
lines starting with ``#`` are skipped.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

MODALITIES = ("rgb", "rgbd", "rgbt")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    dataset_id: str
    modality: str
    rgb_path: Path
    aux_path: Path | None
    gt_path: Path

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ManifestError(f"unknown modality {self.modality!r}")
        if (self.modality == "rgb") != (self.aux_path is None):
            raise ManifestError(
                f"modality {self.modality!r} {'forbids' if self.modality == 'rgb' else 'requires'} an aux path")

    @property
    def sample_id(self) -> str:
        return f"{self.dataset_id}/{self.rgb_path.stem}"


def parse_record(line: str, base: Path, where: str = "") -> SampleRecord:
    cols = line.rstrip("\n").split("\t")
    if len(cols) != 5:
        raise ManifestError(f"{where}: expected 5 tab-separated columns "
                            f"(dataset, modality, rgb, aux or -, gt), got {len(cols)}")
    dataset_id, modality, rgb, aux, gt = (c.strip() for c in cols)
    if not dataset_id:
        raise ManifestError(f"{where}: empty dataset id")
    if modality not in MODALITIES:
        raise ManifestError(f"{where}: unknown modality {modality!r}, expected one of {MODALITIES}")
    paths = {}
    for name, value in (("rgb", rgb), ("aux", aux), ("gt", gt)):
        if name == "aux" and value == "-":
            paths[name] = None
            continue
        if not value or value == "-":
            raise ManifestError(f"{where}: missing {name} path")
        p = Path(value)
        paths[name] = p if p.is_absolute() else base / p
    try:
        return SampleRecord(dataset_id, modality, paths["rgb"], paths["aux"], paths["gt"])
    except ManifestError as exc:
        raise ManifestError(f"{where}: {exc}") from None


def load_manifest(path, check_files: bool = True) -> list[SampleRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    records, seen = [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            where = f"{path}:{lineno}"
            rec = parse_record(line, path.parent, where)
            if rec.sample_id in seen:
                raise ManifestError(f"{where}: duplicate sample id {rec.sample_id!r} "
                                    f"(first on line {seen[rec.sample_id]})")
            if check_files:
                for p in (rec.rgb_path, rec.aux_path, rec.gt_path):
                    if p is not None and not p.is_file():
                        raise ManifestError(f"{where}: file not found: {p}")
            seen[rec.sample_id] = lineno
            records.append(rec)
    if not records:
        warnings.warn(f"manifest {path} holds no records", RuntimeWarning, stacklevel=2)
    return records


def write_manifest(path, records) -> None:
    """Write records with paths relative to the manifest where possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return "-"
        p = Path(p).resolve()
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return str(p)

    lines = [f"{r.dataset_id}\t{r.modality}\t{rel(r.rgb_path)}\t{rel(r.aux_path)}\t{rel(r.gt_path)}\n"
             for r in records]
    path.write_text("".join(lines), encoding="utf-8")


def group_by_dataset(records) -> dict[str, list[SampleRecord]]:
    groups: dict[str, list[SampleRecord]] = {}
    for r in records:
        groups.setdefault(r.dataset_id, []).append(r)
    for name, recs in groups.items():
        kinds = {r.modality for r in recs}
        if len(kinds) > 1:
            raise ManifestError(f"dataset {name!r} mixes modalities {sorted(kinds)}")
    return groups
