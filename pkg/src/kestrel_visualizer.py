#!/usr/bin/env python3
"""
KESTREL Benchmark Visualization
Static charts for bench reports; text summaries when matplotlib is missing
"""

import os
from datetime import datetime

from kestrel_config import get_logger

logger = get_logger(__name__, 'VIZ')

# Try to import matplotlib, with fallback
try:
    import matplotlib
    matplotlib.use('Agg')  # Use non-GUI backend
    import matplotlib.pyplot as plt
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    logger.warning("matplotlib not available. Charts will be saved as text summaries only.")
    MATPLOTLIB_AVAILABLE = False


class KestrelVisualizer:
    """
    Charts for a BenchReport: time per variant and thread count,
    fraction of peak per variant, and fraction of peak against R for sweeps
    """

    def __init__(self, output_dir="data/processed/plots"):
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)

    def _save(self, name):
        filename = os.path.join(self.output_dir, name)
        plt.tight_layout()
        plt.savefig(filename, dpi=150, bbox_inches='tight')
        plt.close()
        logger.info(f"Chart saved: {filename}")
        return filename

    def _write_text(self, name, lines):
        filename = os.path.join(self.output_dir, name)
        with open(filename, 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")
        logger.info(f"Summary saved: {filename}")
        return filename

    def plot_variant_times(self, report):
        """Total MTTKRP seconds (all modes) per variant, grouped by thread count"""
        totals = report.totals()
        if totals.empty:
            logger.info("No timings available to plot")
            return None
        totals = totals[totals['rank'] == totals['rank'].iloc[0]]
        table = totals.pivot(index='threads', columns='variant', values='seconds')

        if MATPLOTLIB_AVAILABLE:
            ax = table.plot(kind='bar', figsize=(10, 6), alpha=0.8, edgecolor='black')
            ax.set_title("MTTKRP Time per Variant (all modes)", fontsize=14)
            ax.set_xlabel("Threads", fontsize=12)
            ax.set_ylabel("Seconds", fontsize=12)
            ax.grid(axis='y', linestyle='--', alpha=0.7)
            return self._save("variant_times.png")

        lines = ["MTTKRP TIME PER VARIANT (seconds, all modes)", "=" * 44, table.to_string()]
        return self._write_text("variant_times.txt", lines)

    def plot_peak_fraction(self, report):
        """Per-mode fraction of peak bandwidth for every variant at the widest thread count"""
        rows = report.rows
        if rows.empty:
            logger.info("No bandwidth figures available to plot")
            return None
        rows = rows[(rows['threads'] == rows['threads'].max()) & (rows['rank'] == rows['rank'].iloc[0])]
        table = rows.pivot_table(index='mode', columns='variant', values='peak_fraction')

        if MATPLOTLIB_AVAILABLE:
            ax = table.plot(kind='bar', figsize=(10, 6), alpha=0.8, edgecolor='black')
            ax.axhline(1.0, color='tab:red', linestyle='--', linewidth=1)
            ax.set_title(f"MTTKRP Bandwidth as Fraction of Peak ({rows['threads'].max()} threads)", fontsize=14)
            ax.set_xlabel("Mode", fontsize=12)
            ax.set_ylabel("Fraction of Peak", fontsize=12)
            ax.grid(axis='y', linestyle='--', alpha=0.7)
            return self._save("peak_fraction.png")

        lines = ["MTTKRP BANDWIDTH AS FRACTION OF PEAK", "=" * 36, table.to_string()]
        return self._write_text("peak_fraction.txt", lines)

    def plot_rank_sweep(self, report):
        """Mean fraction of peak against R, one line per variant"""
        rows = report.rows
        if rows.empty or rows['rank'].nunique() < 2:
            return None
        rows = rows[rows['threads'] == rows['threads'].max()]
        table = rows.groupby(['rank', 'variant'])['peak_fraction'].mean().unstack('variant')

        if MATPLOTLIB_AVAILABLE:
            ax = table.plot(marker='o', figsize=(10, 6), linewidth=2)
            ax.set_title("MTTKRP Bandwidth vs Number of Components", fontsize=14)
            ax.set_xlabel("R", fontsize=12)
            ax.set_ylabel("Fraction of Peak", fontsize=12)
            ax.grid(True, linestyle='--', alpha=0.7)
            return self._save("rank_sweep.png")

        lines = ["MTTKRP BANDWIDTH VS R (fraction of peak)", "=" * 40, table.to_string()]
        return self._write_text("rank_sweep.txt", lines)

    def create_bench_summary(self, report):
        """Plain-text summary of the run, always written"""
        lines = [
            "KESTREL MTTKRP BENCHMARK SUMMARY",
            "=" * 32,
            f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}",
        ]
        for key, value in report.metadata.items():
            lines.append(f"{key}: {value}")
        if report.peak_gbps:
            lines.append(f"Peak bandwidth: {report.peak_gbps:.1f} GB/s")
        lines.append("")
        if not report.rows.empty:
            lines.append(report.totals().to_string(index=False))
            flagged = int(report.rows['above_peak'].sum())
            if flagged:
                lines.append(f"\nRows above measured peak (cached reads): {flagged}")
        return self._write_text("bench_summary.txt", lines)

    def generate_all(self, report):
        """Every chart that applies to the report; returns the written paths"""
        written = [
            self.plot_variant_times(report),
            self.plot_peak_fraction(report),
            self.plot_rank_sweep(report),
            self.create_bench_summary(report),
        ]
        return [path for path in written if path]
