# Configuration for radisynth
import os

# ╔══════════════════════════════════════════════════════════════════════╗
# ║  Workspace / 运行环境                                               ║
# ║  RADISYNTH_WORKSPACE → 默认工作区根目录 (manifest.json 所在位置)      ║
# ║  RADISYNTH_THREADS   → 投影渲染 / 重建 / 推理的工作线程数             ║
# ╚══════════════════════════════════════════════════════════════════════╝
WORKSPACE_ROOT = os.getenv("RADISYNTH_WORKSPACE", "./workspace")
DEFAULT_THREADS = int(os.getenv("RADISYNTH_THREADS", "1"))
DEFAULT_SEED = int(os.getenv("RADISYNTH_SEED", "0"))

# ── 日志 ──────────────────────────────────────────────────────────────────────
LOG_LEVEL = os.getenv("RADISYNTH_LOG_LEVEL", "INFO")
# 留空 = 只输出到 stderr
LOG_FILE = os.getenv("RADISYNTH_LOG_FILE", "")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# ── 材料 (有效单能 μ, 1/mm) ───────────────────────────────────────────────────
# Calibration constants at one effective beam energy, not physics claims.
MATERIAL_MU = {
    "aluminum": 0.08,
    "air": 0.0,
    "steel": 0.55,
    "preg": 0.035,
}

# ── 试件生成 ──────────────────────────────────────────────────────────────────
PLATE_SIZE = (100.0, 40.0, 4.0)    # x, y, z (mm); thickness along z
PORE_COUNT_MEAN = 100               # Poisson λ
PORE_BASE_RADIUS = 0.5              # mm
PORE_SCALE_RANGE = (0.5, 2.1)
PORE_ROTATION_RANGE = (-90.0, 90.0)
PORE_MARGIN = 0.2                   # mm
PORE_MAX_RETRIES = 100
PORE_CLEARANCE = 1.05              # × extent, covers volume-matched tessellation
SPHERE_SEGMENTS = 20                # OpenSCAD $fn
SPEC_SCHEMA_VERSION = 1

# ── 投影几何 ──────────────────────────────────────────────────────────────────
SOD_MM = 500.0
SDD_MM = 1000.0
DETECTOR_SHAPE = (512, 512)         # height, width
PIXEL_PITCH_MM = 0.3
RAY_CHUNK = 4096                    # rays per vectorized batch
RAY_EPSILON = 1e-9                  # × scene diameter
RAY_JITTER = 1e-6                   # × pixel pitch

# ── 噪声 / 量化 ───────────────────────────────────────────────────────────────
NOISE_SIGMA_REL = 0.10
QUANT_BITS = 16

# ── CT 重建 ───────────────────────────────────────────────────────────────────
LOG_EPSILON = 1e-6
FILTER_KIND = "ramp"
FILTER_CUTOFF = 1.0
CT_SDD_MM = 5000.0                  # quasi-parallel acquisition default
CT_SOD_MM = 2500.0

# ── CNN 像素分类器 (segmentSize-filterA-filterB) ──────────────────────────────
CNN_ARCH = (20, 8, 8)
CNN_LEARNING_RATE = 0.01
CNN_BATCH_SIZE = 16
CNN_EPOCHS = 100
CNN_SEGMENTS = 1000
CNN_MIX = (0.3, 0.7)                # pore, background
GRAD_CHECK_STEP = 1e-4
GRAD_CHECK_FRACTION = 0.01

# ── 特征提取 ──────────────────────────────────────────────────────────────────
THRESHOLD_TAU = 0.5
DBSCAN_EPS = 2.0                    # pixels
DBSCAN_MIN_PTS = 5
ELLIPSE_REFINE = False
CSV_FLOAT_FORMAT = "%.9g"

# ── Z-profile / 自编码器 ──────────────────────────────────────────────────────
ZPROFILE_WINDOW = 4
AE_KIND = "conv"                    # "conv" | "lstm"
AE_CHANNELS = 8
AE_LSTM_HIDDEN = 8
AE_LEARNING_RATE = 0.01
AE_BATCH_SIZE = 16
AE_EPOCHS = 60
AE_PERCENTILE = 99.0
ZCNN_FILTERS = (8, 8)
DAMAGE_NOISE = 0.002                # 1/mm, additive voxel noise

# ── 气孔检测实验 ─────────────────────────────────────────────────────────────
EXPERIMENT_SHAPE = (512, 512)
EXPERIMENT_PITCH_MM = 0.3
EXPERIMENT_FULL_SHAPE = (1000, 1000)
EXPERIMENT_FULL_PITCH_MM = 0.15
EXPERIMENT_MAGNIFICATION = 2.0
EXPERIMENT_PLATE_SIZE = (72.0, 72.0, 4.0)    # fits the 76.8 mm field at M = 2
EXPERIMENT_PORES = 100

# ── 模型文件 ──────────────────────────────────────────────────────────────────
MODEL_MAGIC = b"RSMD"
MODEL_VERSION = 1
