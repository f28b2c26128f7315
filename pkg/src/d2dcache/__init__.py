"""D2D-assisted multi-antenna coded caching: schedules, beamformers, mode selection."""
from .beamforming import BeamformerSolution, MessagePlan, SolverOptions, solve_max_min
from .channel import ChannelRealization, ScenarioConfig, load_config, parse_config, sample
from .combinatorics import ParameterError, SchedulingError, UnsupportedConfiguration, place
from .complexity import ComplexityInput, count_actual, mac_bounds, quad_bounds
from .d2d import D2DSchedule, build_schedule, remaining_message_plan, t_d2d
from .mode_select import exhaustive_select, heuristic_select
from .simrunner import DeliveryReport, run_experiment, run_trial

__all__ = [
    "BeamformerSolution",
    "ChannelRealization",
    "ComplexityInput",
    "D2DSchedule",
    "DeliveryReport",
    "MessagePlan",
    "ParameterError",
    "ScenarioConfig",
    "SchedulingError",
    "SolverOptions",
    "UnsupportedConfiguration",
    "build_schedule",
    "count_actual",
    "exhaustive_select",
    "heuristic_select",
    "load_config",
    "mac_bounds",
    "parse_config",
    "place",
    "quad_bounds",
    "remaining_message_plan",
    "run_experiment",
    "run_trial",
    "sample",
    "solve_max_min",
    "t_d2d",
]
