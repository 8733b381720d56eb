from causal_engine.graph import (
    Dag, Path, CriterionReport, multimodal_fusion_dag, directed_paths, all_paths, backdoor_paths,
    path_blocked, d_separated, d_separated_by_paths, check_backdoor_criterion,
    check_frontdoor_criterion, check_beta_frontdoor_criterion,
)
from causal_engine.scm import (
    ProbTable, Cpt, DiscreteScm, joint, marginal, conditional, conditional_table, intervene,
    interventional, observational, do_query, random_scm,
)
from causal_engine.adjustment import (
    backdoor_adjust, frontdoor_adjust, beta_frontdoor_adjust, compare_with_oracle,
)
from causal_engine.do_calculus import (
    SurgerySpec, StepReport, surger, rule_applicable, check_rule_identity,
    verify_joint_decomposition, verify_decomposition_chain, verify_multiworld_chain,
)
