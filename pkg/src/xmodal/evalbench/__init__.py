from xmodal.evalbench.metrics import mse, ssim
from xmodal.evalbench.policy_eval import PolicyReport, eval_policy
from xmodal.evalbench.recon import ReconReport, eval_reconstruction
from xmodal.evalbench.report import emit_report

__all__ = ["PolicyReport", "ReconReport", "emit_report", "eval_policy", "eval_reconstruction", "mse", "ssim"]
