#!/usr/bin/env python3
"""How long 2500 mAh lasts at different report intervals."""

from loratherm.link import RadioParams, airtime_ms
from loratherm.node import FRAME_LEN, BatteryState, NodeConfig, average_current_ma, lifetime_estimate, simulate_lifetime

air = airtime_ms(RadioParams(7), FRAME_LEN)
eui = bytes.fromhex("70B3D57ED0000001")
print(f"frame {FRAME_LEN} B, airtime {air:.3f} ms at SF7")
print("interval  timer   avg mA   closed form h   stepped h")

for interval in (1, 2, 5, 10, 30):
    for timer in (False, True):
        cfg = NodeConfig("demo", eui, "grass", tx_interval=interval, low_power_timer=timer)
        b = BatteryState()
        stepped, _ = simulate_lifetime(cfg, b, air)
        print(f"{interval:5d} min  {'yes' if timer else 'no ':3s}  {average_current_ma(cfg, b, air):8.3f}"
              f"  {lifetime_estimate(cfg, b, air):14.1f}  {stepped:10.1f}")
