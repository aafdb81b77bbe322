"""Factor-graph MAP inference: max-product belief propagation, FGNN layers,
exact max-product emulation, and the synthetic chain benchmark."""

from ._fgnn import (  # noqa: F401
    Assignment,
    BeliefState,
    BpMode,
    CapacityError,
    DatasetInstance,
    DecomposedFactor,
    DenseNet,
    FactorGraph,
    FactorNode,
    FeatureSet,
    FgnnStack,
    InstanceMeta,
    MapResult,
    Matching,
    ShapeError,
    ShiftedGraph,
    StructureError,
    SumViaMaxGadget,
    Tensor,
    TrainConfig,
    VariableNode,
    agreement,
    brute_force_map,
    build_bp_emulator,
    build_max_net,
    build_sum_via_max,
    decode,
    decompose_factor,
    emulator_beliefs,
    find_perfect_matching,
    gen_instance,
    loss_map_xent,
    make_desk_arch,
    net_forward,
    nonneg_shift,
    predict,
    reconstruct,
    run_max_product,
    score,
    shift_for_decomposition,
    train,
    viterbi_chain_map,
    window_dp_map,
)

__version__ = "0.1.0"
