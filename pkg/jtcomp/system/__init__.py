from jtcomp.system.feedback import CooperationMap, MaskedCsi, backhaul_load, full_cooperation, mask_csi, \
    relative_threshold
from jtcomp.system.metrics import Precoder, SinrMode, SinrReport, design_sinr, design_sinr_batch, evaluate, \
    linearizing_coefficient, mmse_receiver, naive_pl_sinr, pessimistic_sinr, receive_variance, true_sinr, user_mse, \
    weighted_sum_rate
from jtcomp.system.scenario import ChannelRealization, Scenario, build_scenario, calibrate_power, draw_drop, \
    noise_power, redraw_fast_fading, rescale_for_conditioning, scenario_with
