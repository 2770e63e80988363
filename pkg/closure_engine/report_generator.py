from datetime import datetime
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from . import __version__
from .errors import ReportWriteError
from .meso_averages import MesoGrid

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10e"


class ReportGenerator:
    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)

    def _prepare(self) -> None:
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportWriteError(self.output_dir, e)

    def write_frame(self, frame: pd.DataFrame, name: str) -> Dict[str, Any]:
        """
        Write one CSV and return its manifest entry (file, sha256, row count)
        """
        self._prepare()
        path = self.output_dir / name
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed to write {path}: {str(e)}")
            raise ReportWriteError(path, e)
        return {
            "file": name,
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            "rows": int(len(frame)),
        }

    def write_manifest(self, manifest: Dict[str, Any]) -> Path:
        self._prepare()
        path = self.output_dir / "manifest.json"
        try:
            path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str), encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed to write {path}: {str(e)}")
            raise ReportWriteError(path, e)
        return path

    def emit_reports(self, reports: Sequence, resolved_config: Optional[Dict[str, Any]] = None,
                     extra_frames: Optional[Dict[str, pd.DataFrame]] = None) -> Dict[str, Any]:
        """
        One CSV per error report, optional extra tables, and a manifest
        echoing the resolved configuration and per-file checksums
        """
        runs: List[Dict[str, Any]] = []
        for report in reports:
            entry = {"label": report.label, "metadata": report.metadata, "error": report.error}
            if report.rows or report.error is None:
                entry.update(self.write_frame(report.to_frame(), f"{report.label}.csv"))
            for snapshot in report.snapshots:
                grid = _grid_of(report)
                t = f"{snapshot.meso.t:.4f}"
                entry.setdefault("fields", []).append(
                    self.write_frame(snapshot.meso_frame(grid), f"{report.label}_meso_t{t}.csv"))
                entry["fields"].append(self.write_frame(
                    snapshot.reconstruction.to_frame(grid, snapshot.fine), f"{report.label}_fine_t{t}.csv"))
            runs.append(entry)

        tables = []
        for name, frame in (extra_frames or {}).items():
            tables.append({"name": name, **self.write_frame(frame, f"{name}.csv")})

        manifest = {
            "metadata": {
                "timestamp": datetime.now().isoformat(),
                "engine_version": __version__,
                "report_version": "1.0.0",
                "bound_constant": "D^max(0,1-1/p) * max_j ||xi_hat_j||_p * coefficient operator norm",
            },
            "config": resolved_config or {},
            "runs": runs,
            "tables": tables,
            "failed_runs": sum(1 for run in runs if run["error"]),
        }
        path = self.write_manifest(manifest)
        logger.info(f"Wrote {len(runs)} report(s) and {len(tables)} table(s); manifest at {path}")
        return manifest


def _grid_of(report) -> MesoGrid:
    m = report.metadata
    return MesoGrid(B=m["B"], Nf=m["Nfine"], L=m.get("L", 1.0))
