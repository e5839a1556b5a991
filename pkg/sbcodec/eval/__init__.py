"""Quality metrics, BD-rate and CSV reports."""
