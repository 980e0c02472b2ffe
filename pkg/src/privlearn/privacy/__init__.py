from privlearn.privacy.accounting import (
    PrivacyLedger,
    empirical_sensitivity,
    epsilon_budget,
    epsilon_from_deltas,
    mutual_information_gaussian,
    sensitivity_bound,
)
from privlearn.privacy.keys import dh_public_key, dh_shared_secret
from privlearn.privacy.noise import (
    DegenerateNeighbourhoodError,
    LinkNoise,
    NeighbourhoodPartition,
    NoisePlan,
    NoiseSource,
    draw_pair_noise,
    graph_homomorphic_noise,
    laplace_sample,
    local_gh_link_noise,
    local_gh_pair_noise,
    local_graph_homomorphic_noise,
    network_weighted_sum,
    partition_neighbourhood,
    random_noise,
)
