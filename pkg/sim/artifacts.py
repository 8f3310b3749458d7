"""
Artifact writers: JSON documents with a meta block and CSV tables whose
first line echoes tool, version, seed and the effective config.

No timestamps are written, so re-running a command reproduces the bytes.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from sim.report_types import ArtifactMeta
from src import TOOL_NAME, __version__

logger = logging.getLogger(__name__)


class NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, pd.DataFrame):
            return obj.to_dict(orient="records")
        if isinstance(obj, Path):
            return str(obj)
        return super().default(obj)


def make_meta(seed: int, config: Dict[str, Any]) -> ArtifactMeta:
    return {"tool": TOOL_NAME, "version": __version__, "seed": int(seed), "config": config}


def _compact(config: Dict[str, Any]) -> str:
    return json.dumps(config, cls=NumpyEncoder, sort_keys=True, separators=(",", ":"))


def write_json(path: Path, body: Dict[str, Any], meta: ArtifactMeta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta, **body}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, cls=NumpyEncoder, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"wrote {path}")
    return path


def write_csv(path: Path, frame: pd.DataFrame, meta: ArtifactMeta) -> Path:
    """Header comment line, then the table ('.' decimals, LF line endings)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    comment = (f"# tool={meta['tool']} version={meta['version']} seed={meta['seed']} "
               f"config={_compact(meta['config'])}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(comment)
        frame.to_csv(f, index=False, lineterminator="\n", float_format="%.10g")
    logger.info(f"wrote {path} ({len(frame)} rows)")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_json(path: Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
