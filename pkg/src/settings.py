import os
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SolverSettings:
    """Runtime settings read from the environment (.env is loaded by the entry script)"""
    threads: int = 1
    out_dir: str = "out"

    @classmethod
    def from_env(cls, threads: Optional[int] = None, out_dir: Optional[str] = None) -> "SolverSettings":
        """Explicit arguments win over HVRFIF_THREADS / HVRFIF_OUT_DIR"""
        if threads is None:
            raw = os.getenv("HVRFIF_THREADS", "1").strip()
            try:
                threads = int(raw)
            except ValueError:
                raise ValueError(f"HVRFIF_THREADS must be a positive integer, got {raw!r}")
        if threads < 1:
            raise ValueError(f"HVRFIF_THREADS must be a positive integer, got {threads}")
        out_dir = out_dir or os.getenv("HVRFIF_OUT_DIR") or "out"
        return cls(threads=threads, out_dir=out_dir)
