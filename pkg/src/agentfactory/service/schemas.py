"""Request/response models for the service API."""

from __future__ import annotations

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class TaskRunRequest(BaseModel):
    query: str
    task_id: Optional[str] = None
    replay_path: Optional[str] = Field(default=None, description="replay script path on the server host")
    step_limit: Optional[int] = None


class SavedSkillRef(BaseModel):
    name: str
    version: int


class SkippedSkillRef(BaseModel):
    name: str
    reason: str


class TaskRunResponse(BaseModel):
    task_id: str
    outcome: str
    answer: str = ""
    saved_skills: List[SavedSkillRef] = []
    skipped_skills: List[SkippedSkillRef] = []
    orchestration_tokens: int = 0
    steps: int = 0
    error: str = ""


class SkillSummaryModel(BaseModel):
    name: str
    kind: str
    description: str
    version: int


class SkillListResponse(BaseModel):
    subagents: List[SkillSummaryModel]
    builtins: List[SkillSummaryModel]


class SkillShowResponse(BaseModel):
    name: str
    skill_md: str


class SkillCodeResponse(BaseModel):
    name: str
    code: str


class DryPlanRequest(BaseModel):
    query: str = ""


class DryPlanResponse(BaseModel):
    listing: str


class ExportRequest(BaseModel):
    names: List[str]
    dest: str
    reproducible: bool = False
    verify: bool = False


class ExportResponse(BaseModel):
    bundle_dir: str
    skills: List[Dict[str, Any]]
    verified: bool = False
    report: Optional[Dict[str, Any]] = None


class EvalRequest(BaseModel):
    manifest_path: str
    report_path: Optional[str] = None


class TokenTotalResponse(BaseModel):
    task_id: str
    orchestration_tokens: int


class BatchReportRequest(BaseModel):
    task_ids: List[str]


class BatchReportResponse(BaseModel):
    per_task: Dict[str, int]
    mean: float


class ErrorBody(BaseModel):
    type: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorBody
