from aiosod.metrics.cost import CostReport, count_flops, count_params, cost_report, measure_fps
from aiosod.metrics.report import benchmark_report
from aiosod.metrics.saliency import (MetricsReport, aggregate, e_measure, evaluate_folder, mae,
                                     max_f_measure, s_measure)

__all__ = ["CostReport", "MetricsReport", "aggregate", "benchmark_report", "cost_report", "count_flops",
           "count_params", "e_measure", "evaluate_folder", "mae", "max_f_measure", "measure_fps",
           "s_measure"]
