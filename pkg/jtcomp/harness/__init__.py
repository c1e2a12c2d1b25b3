from jtcomp.harness.experiment import ALGORITHMS, Algorithm, CertificationResult, ExperimentResult, Settings, \
    algorithm_seed, best_of_restarts, cdf_points, certify, drop_seed, parse_algorithm, restart_study, run_experiment, \
    summary_table, trace, write_csv
