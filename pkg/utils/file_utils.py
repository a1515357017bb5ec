import re
from pathlib import Path
from typing import List

LEVEL_FILE = re.compile(r"^level_(\d+)\.png$")


def ensure_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def level_file(slide_dir: Path, index: int) -> Path:
    return Path(slide_dir) / f"level_{index}.png"


def level_files(slide_dir: Path) -> List[Path]:
    """Pyramid level images of a slide directory, base level first."""
    found = []
    for p in Path(slide_dir).iterdir():
        m = LEVEL_FILE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]
