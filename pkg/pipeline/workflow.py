"""
Base Workflow class for multi-stage pipeline runs.
Stages share a context dict; each stage's return value is stored in it
under the stage name.
"""
import time
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import StageError

logger = logging.getLogger("Workflow")

FAILURE_STRATEGIES = ("abort", "retry", "skip")


@dataclass
class WorkflowStep:
    """
    A single stage in a workflow.

    Attributes:
        name: Key under which the stage result is stored in the context.
        action: Callable receiving the shared context dict.
        on_failure: "abort", "retry" or "skip".
        max_retries: Number of retries when on_failure is "retry".
        description: Human-readable description of this stage.
    """
    name: str
    action: Callable[[Dict[str, Any]], Any]
    on_failure: str = "abort"
    max_retries: int = 1
    description: str = ""

    def __post_init__(self):
        if self.on_failure not in FAILURE_STRATEGIES:
            raise ValueError(f"Unknown failure strategy: {self.on_failure}. Available: {list(FAILURE_STRATEGIES)}")
        if not self.description:
            self.description = self.name


@dataclass
class WorkflowResult:
    success: bool
    context: Dict[str, Any]
    completed: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    total_time: float = 0.0


class BaseWorkflow:
    """
    Base class for all workflows.

    Subclasses define `name`, `description` and override `get_steps()`.
    A failing "abort" stage raises StageError chained to the cause; artifacts
    committed by earlier stages stay in the workspace.
    """

    name: str = "base_workflow"
    description: str = "Base workflow"

    def get_steps(self) -> List[WorkflowStep]:
        return []

    def run(self, context: Dict[str, Any] = None) -> WorkflowResult:
        context = {} if context is None else context
        steps = self.get_steps()
        result = WorkflowResult(success=True, context=context)
        start_time = time.time()

        logger.info(f"========== 工作流开始: {self.name} ==========")
        logger.info(f"描述: {self.description}")
        logger.info(f"总步骤数: {len(steps)}")

        for i, step in enumerate(steps, 1):
            logger.info(f"--- 工作流步骤 {i}/{len(steps)}: {step.description} ---")
            max_attempts = step.max_retries + 1 if step.on_failure == "retry" else 1
            error = None
            for attempt in range(1, max_attempts + 1):
                try:
                    context[step.name] = step.action(context)
                    error = None
                    break
                except Exception as e:
                    error = e
                    if attempt < max_attempts:
                        logger.warning(f"步骤 {i} 失败 ({e})，准备重试 {attempt + 1}/{max_attempts}")

            if error is None:
                result.completed.append(step.name)
                continue
            if step.on_failure == "skip":
                logger.warning(f"步骤 {i} 失败，跳过继续: {error}")
                result.skipped.append(step.name)
                continue
            logger.error(f"步骤 {i} ({step.name}) 失败，终止工作流: {error}")
            raise StageError(step.name, str(error)) from error

        result.total_time = time.time() - start_time
        logger.info(f"========== 工作流完成: {self.name} ({result.total_time:.1f}秒) ==========")
        return result

    def __repr__(self) -> str:
        return f"<Workflow: {self.name} ({len(self.get_steps())} steps)>"
