from .policies import (IdmPolicy, ImitationPolicy, idm_policy_set,
                       route_speed_limit)
from .planner import (PlanConfig, PolicyEvaluation, default_policy_set,
                      evaluate_policies, plan_step)
from .env import OBS_DIM, EnvConfig, EnvState, WorldEnv
from .cem import (CemResult, LinearPolicyTemplate, cem_improve,
                  random_policy_score, run_episode, select_elites)

__all__ = [
    "IdmPolicy", "ImitationPolicy", "idm_policy_set", "route_speed_limit",
    "PlanConfig", "PolicyEvaluation", "default_policy_set",
    "evaluate_policies", "plan_step",
    "WorldEnv", "EnvConfig", "EnvState", "OBS_DIM",
    "LinearPolicyTemplate", "CemResult", "cem_improve", "random_policy_score",
    "run_episode", "select_elites",
]
