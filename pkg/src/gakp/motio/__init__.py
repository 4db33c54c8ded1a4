from .io import MotTable, format_row, read_detections, read_ground_truth, read_results, write_results, write_table
from .metrics import EvalReport, combine_reports, evaluate, format_csv, format_table, mota
from .synthetic import SyntheticSceneConfig, crossing_scene, generate_synthetic, write_scene
