"""Command-line harness: dataset synthesis, restoration, tiled PSF removal
and benchmarking."""
