"""CLI package — command-line runs, comparisons and Monte Carlo campaigns."""
