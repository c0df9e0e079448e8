"""Error codes for the command-line front end.

Every failure surfaces as one line ``error <CODE>: <message>`` on stderr and
a nonzero exit status that depends only on the code.
"""

from __future__ import annotations

EXIT_CODES = {
    "BAD_ARGUMENT": 2,
    "CONFIG_MISSING": 3,
    "CONFIG_INVALID": 4,
    "INPUT_MISSING": 5,
    "IO_ERROR": 6,
    "MANIFEST_MISSING": 7,
    "MANIFEST_INVALID": 8,
    "METADATA_MISSING": 9,
    "KERNEL_INVALID": 10,
    "GRID_MISMATCH": 11,
    "DATASET_MISMATCH": 12,
    "INTERNAL": 70,
}


class AppError(Exception):
    def __init__(self, code: str, message: str):
        if code not in EXIT_CODES:
            raise ValueError(f"unknown error code {code!r}")
        super().__init__(message)
        self.code = code
        self.message = message

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.code]

    def line(self) -> str:
        msg = " ".join(str(self.message).split())
        return f"error {self.code}: {msg}"
