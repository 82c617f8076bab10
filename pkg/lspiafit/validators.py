"""Validation functions for input point files and output locations."""

import logging
import os

logger = logging.getLogger(__name__)

POINT_EXTENSIONS = {".csv": "csv", ".xyz": "xyz", ".txt": "xyz"}


def validate_input_file(path):
    """
    Validate that a file exists and looks like a point file.

    Args:
        path: Path to the point file

    Returns:
        tuple: (is_valid: bool, error_message: str or None)
    """
    if not os.path.exists(path):
        return False, f"File does not exist: {path}"

    if not os.path.isfile(path):
        return False, f"Path is not a file: {path}"

    ext = os.path.splitext(path)[1].lower()
    if ext not in POINT_EXTENSIONS:
        supported = ", ".join(sorted(POINT_EXTENSIONS))
        return False, f"Unsupported file extension: {ext or '(none)'}. Supported: {supported}"

    if not os.access(path, os.R_OK):
        return False, f"File is not readable: {path}"

    logger.debug(f"Input file validation passed: {path}")
    return True, None


def point_format(path):
    """
    Point file format implied by the extension.

    Returns:
        str: 'csv' or 'xyz' (unknown extensions are read as CSV)
    """
    return POINT_EXTENSIONS.get(os.path.splitext(path)[1].lower(), "csv")


def validate_output_prefix(prefix):
    """
    Validate that artifacts can be written next to an output prefix.

    Args:
        prefix: Output prefix such as 'runs/curve' (files become runs/curve.*)

    Returns:
        tuple: (is_valid: bool, error_message: str or None)
    """
    if not prefix:
        return False, "Output prefix is empty"

    prefix = os.path.expanduser(prefix)
    if prefix.endswith(os.sep) or os.path.isdir(prefix):
        return False, f"Output prefix names a directory, expected a file stem: {prefix}"

    directory = os.path.dirname(prefix) or "."
    if not os.path.isdir(directory):
        return False, f"Output directory does not exist: {directory}"

    if not os.access(directory, os.W_OK):
        return False, f"Output directory is not writable: {directory}"

    logger.debug(f"Output prefix validation passed: {prefix}")
    return True, None
