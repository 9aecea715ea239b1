"""Horn-clause reasoning workbench.

Generate propositional reasoning problem sets with controlled statistical
properties, run an iterative proof loop with pluggable next-step proposers,
audit the resulting traces against a four-type consistency-error taxonomy,
and render the evaluation tables.
"""

__version__ = "0.1.0"

from .core import (
    ClosureResult,
    HornError,
    IllegalLiteral,
    NotApplicable,
    NotInProblem,
    Problem,
    ProofState,
    Rule,
    applicable_rules,
    apply_rule,
    forward_closure,
    label_and_depth,
)
from .engine import EngineConfig, ProofTrace, run_proof, step_transition
from .generate import (
    Dataset,
    ExhaustedSampling,
    GenConfig,
    expand_steps,
    generate_lp,
    generate_rp,
    generate_rp_balanced,
    split,
)
from .audit import AuditVerdict, TraceMismatch, aggregate, audit_trace
from .metrics import (
    MetricsTables,
    OutcomeRecord,
    accuracy_by_depth,
    confusion_and_prf1,
    correlation_rules_label,
    dataset_stats,
    render_report,
)
from .proposers import (
    CorruptorSpec,
    ExternalProposer,
    OracleProposer,
    ProposerFailure,
    corrupt,
    external_proposer,
    oracle_propose,
)
from .textwire import (
    ParseError,
    Proposal,
    ProofString,
    StepInstance,
    parse_problem,
    parse_proposal,
    render_step_instance,
    render_whole_proof,
    serialize_problem,
)
