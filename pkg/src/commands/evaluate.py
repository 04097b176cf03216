import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from commands.synth import read_instance
from services.evaluation import l1_error, stacked_l1_error
from utils.data_io import read_loadings
from utils.errors import DimensionError

logger = logging.getLogger(__name__)


def cmd_eval(loadings_dir: Union[str, Path], instance_path: Union[str, Path],
             allow_sign: Optional[bool] = None) -> Dict[str, Any]:
    """err1 of written loadings against a synthesized instance, overall and per view"""
    D1, D2 = read_loadings(loadings_dir)
    instance = read_instance(instance_path)
    if D1.shape != instance.D1.shape or D2.shape != instance.D2.shape:
        raise DimensionError(
            f"loadings {D1.shape}/{D2.shape} do not match the instance {instance.D1.shape}/{instance.D2.shape}")
    sign = instance.kind == "continuous" if allow_sign is None else allow_sign
    match = stacked_l1_error(D1, D2, instance.D1, instance.D2, sign)
    report = {
        "err1": match.error,
        "err1_view1": l1_error(D1, instance.D1, sign).error,
        "err1_view2": l1_error(D2, instance.D2, sign).error,
        "permutation": match.permutation.tolist(),
        "allow_sign": sign,
    }
    logger.info("err1 = %.6f", match.error)
    return report
