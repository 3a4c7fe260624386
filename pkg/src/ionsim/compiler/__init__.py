from .expr import (
    ExprParseError,
    OperatorExpr,
    Term,
    commutator,
    expr_to_matrix,
    format_expr,
    parse_expr,
    project_monomials,
)
from .gadget import (
    GADGET_SIGN,
    NonRealizableOperand,
    calibrate_gadget_sign,
    commutator_gadget,
    effective_generator,
    gadget_unitary,
)
from .native import NATIVE_KEYS, NotNativeError, is_native, native_pair_program, native_program
from .program import FreeEvolution, ProgramMeta, Pulse, PulseProgram, parse_program
from .synthesis import CompileReport, GadgetDesign, Synthesizer, UnreachableTarget, synthesize, trotter, verify
