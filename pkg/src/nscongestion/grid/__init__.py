from .network import (
    Bus,
    GridNetwork,
    Line,
    NetworkError,
    PricingConfig,
    default_network,
    default_scenario_path,
    load_network,
    save_network,
)
from .powerflow import PowerFlowError, PowerFlowSolution, solve_power_flow
from .pricing import (
    GridMarginal,
    ReductionError,
    ReductionResult,
    build_congestion_game,
    charging_cost,
    eno_cost,
    lambda_table,
    marginal_price,
    reduce_grid,
    transformer_price,
)
