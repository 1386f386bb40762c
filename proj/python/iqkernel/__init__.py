# Copyright 2026 The iqkernel Authors
# SPDX-License-Identifier: Apache-2.0

"""Integer-only transformer block kernels.

Thin bindings over the C++ library: integer math primitives, quantization,
the toy block with its float and integer forward passes, FSBR calibration
and the comparison report used by the ``iqkernel`` command.
"""

import json as _json

from ._iqkernel import (  # noqa: F401
    Block,
    CalibratedBlock,
    NumericalError,
    QuantTensor,
    ValidationError,
    calibrate,
    cli_main,
    di_exp,
    fit_dyadic,
    float_forward,
    floor_log2,
    i_sqrt,
    int_div,
    int_forward,
    load_block,
    load_calibrated,
    make_toy_block,
    make_toy_data,
    quantize,
    save_block,
    save_calibrated,
    softmax,
)
from ._iqkernel import _compare_report


def compare_report(calibrated, eval_data, ablate=(), sweep_c=(), trace_float=False):
    """Integer vs float error report as a dict (same content as ``iqkernel compare``)."""
    return _json.loads(
        _compare_report(calibrated, list(eval_data), list(ablate), list(sweep_c), trace_float)
    )


__all__ = [name for name in dir() if not name.startswith("_")]
