# Pipeline Module
from dataclasses import dataclass
from typing import Callable, Type

from pydantic import BaseModel

from pipeline import commands as cmd
from pipeline.experiment import ExperimentParams, run_experiment


@dataclass(frozen=True)
class Command:
    name: str
    params: Type[BaseModel]
    handler: Callable[[cmd.CommandContext, BaseModel], str]
    description: str


# Command registry
COMMAND_REGISTRY = {c.name: c for c in [
    Command("gen-plate", cmd.GenPlateParams, cmd.gen_plate, "生成含随机椭球气孔的铝板"),
    Command("gen-fml", cmd.GenFmlParams, cmd.gen_fml, "生成纤维金属层压板 (FML) 叠层"),
    Command("simulate", cmd.SimulateParams, cmd.simulate, "X 射线投影仿真 (单张或旋转序列)"),
    Command("recon", cmd.ReconParams, cmd.recon, "滤波反投影 CT 重建"),
    Command("extract-segments", cmd.ExtractSegmentsParams, cmd.extract_segments, "抽取 CNN 训练片段"),
    Command("train-cnn", cmd.TrainCnnParams, cmd.train_cnn, "训练像素 CNN 分类器"),
    Command("classify", cmd.ClassifyParams, cmd.classify, "滑窗分类生成特征图"),
    Command("cluster", cmd.ClusterParams, cmd.cluster, "阈值化 + DBSCAN 聚类"),
    Command("fit", cmd.FitParams, cmd.fit, "对聚类拟合椭圆, 生成气孔报告"),
    Command("eval", cmd.EvalParams, cmd.evaluate, "与真值比较的像素 TP/FN/FP 评估"),
    Command("report", cmd.ReportParams, cmd.report, "一步完成阈值/聚类/拟合的气孔报告"),
    Command("zslice", cmd.ZsliceParams, cmd.zslice, "提取 z-profile 网格"),
    Command("train-ae", cmd.TrainAeParams, cmd.train_autoencoder, "在基线 z-profile 上训练自编码器"),
    Command("anomaly", cmd.AnomalyParams, cmd.anomaly, "重建误差异常图"),
    Command("synth-volume", cmd.SynthVolumeParams, cmd.synth_volume, "合成带拉伸损伤的层压体积"),
    Command("train-zcnn", cmd.TrainZcnnParams, cmd.train_profile_cnn, "训练 z-profile 损伤分类器"),
    Command("verify", cmd.VerifyParams, cmd.verify, "校验工作区溯源链"),
    Command("list", cmd.ListParams, cmd.list_artifacts, "列出工作区工件"),
    Command("experiment", ExperimentParams, run_experiment, "端到端气孔表征实验"),
]}


def get_command(name: str) -> Command:
    """Get a command by name."""
    if name not in COMMAND_REGISTRY:
        raise ValueError(f"Unknown command: {name}. Available: {list(COMMAND_REGISTRY.keys())}")
    return COMMAND_REGISTRY[name]
