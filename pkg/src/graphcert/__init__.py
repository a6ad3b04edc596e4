"""graphcert: statistical certification of qudit graph states and CV weighted
hypergraph states from single-site stabilizer tests on a sampled subset of
registers, with closed-form fidelity and confidence guarantees."""

__version__ = "0.1.0"

from .adversary import (
    AllNonzeroDeviation,
    Deviated,
    FixedDeviation,
    FixedShift,
    HonestStrategy,
    Ideal,
    IIDNoiseStrategy,
    RegisterAssignment,
    ScriptedStrategy,
    Shifted,
    SingleBadStrategy,
    TableauState,
    UniformNonzeroDeviation,
)
from .bounds import (
    SerflingQuery,
    comparison_copies,
    compute_n_test,
    exact_sampling_tail,
    group_confidence,
    certified_count,
    p_acc,
    p_acc_prior,
    serfling_tail,
    total_confidence,
)
from .cv import (
    CVTestOutcome,
    GaussianState,
    NoiseModel,
    NullifierModel,
    cv_deviation_model,
    prepare_cv_graph_state,
    run_cv_stabilizer_test,
)
from .hypergraph import (
    NullifierSpec,
    StabilizerSpec,
    WeightedHypergraph,
    build_nullifiers,
    build_stabilizers,
    cluster2d,
    complete_graph,
    cycle_graph,
    parse_hypergraph,
    path_graph,
    preset,
)
from .qudit import (
    DenseState,
    GraphBasisState,
    QuditPauli,
    StabilizerTableau,
    TestOutcome,
    dense_test_distribution,
    graph_state_tableau,
    measure_stabilizer_test,
    tableau_test_distribution,
)
from .rng import TrialStreams
from .verifier import (
    ProtocolParams,
    Transcript,
    Verdict,
    certified_fidelity_bound,
    ensemble_fidelity,
    multi_copy_bound,
    run_protocol,
    run_protocol_fast,
    sample_groups,
)
