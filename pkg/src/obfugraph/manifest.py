"""JSON-Lines manifests: one ``{"path", "label", "tag"?}`` object per line."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ManifestRow:
    path: Path
    label: int | None = None
    tag: str | None = None


def read_manifest(path: str | Path) -> list[ManifestRow]:
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not isinstance(obj, dict) or "path" not in obj:
            raise ValueError(f"{path}:{lineno}: row needs a 'path' field")
        label = obj.get("label")
        if label not in (None, 0, 1):
            raise ValueError(f"{path}:{lineno}: label must be 0 or 1")
        p = Path(obj["path"])
        if not p.is_absolute():
            p = path.parent / p
        rows.append(ManifestRow(p, label, obj.get("tag")))
    return rows


def manifest_lines(rows: list[ManifestRow], base: Path | None = None) -> str:
    out = []
    for r in rows:
        p = r.path
        if base is not None:
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
        obj = {"path": str(p), "label": r.label}
        if r.tag is not None:
            obj["tag"] = r.tag
        out.append(json.dumps(obj, sort_keys=True))
    return "\n".join(out) + "\n"
