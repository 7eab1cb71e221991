#!/usr/bin/env python3
"""Delivery rate against distance for a roof-top gateway, open field and built-up street."""

import numpy as np

from loratherm.link import LOS_DEFAULT, OBSTRUCTED_DEFAULT, RadioParams, deliver, max_range_m

sf12 = RadioParams(12)
rng = np.random.default_rng(2018)
trials = 500

for env in (LOS_DEFAULT, OBSTRUCTED_DEFAULT):
    edge = max_range_m(sf12, env)
    print(f"{env.mode.value}: n={env.path_loss_exponent}, budget crossing {edge:.0f} m "
          f"({max_range_m(sf12, env, antenna_raised=True):.0f} m with a raised antenna)")
    for d in np.linspace(0.5, 1.3, 9) * edge:
        ok = sum(deliver(sf12, env, d, False, rng).received for _ in range(trials))
        print(f"  {d:7.0f} m  {ok / trials:6.1%}")
