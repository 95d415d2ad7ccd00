"""Scratch calibration harness (not part of the package)."""
import time

from coopsim import default_scenario, run_experiment, ScenarioMode
from coopsim.sim_engine import trial_seeds, run_trial


def first_decel_distance(trace, v_floor=1.0, drop=0.05):
    """|signed distance| at the first material speed decrease on approach."""
    prev_v = None
    for t, signed, v, mode in trace:
        if prev_v is not None and v < prev_v - drop and prev_v > v_floor and signed < 0:
            return abs(signed)
        prev_v = v
    return None


def stop_position(trace):
    for t, signed, v, mode in trace:
        if v <= 1e-6 and abs(signed) <= 30 and t > 1.0:
            return abs(signed)
    return None


def report(n=10, seed=42):
    out = {}
    for mode in ScenarioMode:
        cfg = default_scenario(mode)
        t0 = time.perf_counter()
        s = run_experiment(cfg, n, master_seed=seed)
        wall = time.perf_counter() - t0
        decel = {vid: [] for vid in s.mean_passing}
        stops = {vid: [] for vid in s.mean_passing}
        zeros30 = 0
        for tm in s.trials:
            clean = True
            for vid, trace in tm.speed_traces.items():
                d = first_decel_distance(trace)
                if d is not None:
                    decel[vid].append(d)
                sp = stop_position(trace)
                if sp is not None:
                    stops[vid].append(sp)
                if tm.min_speed_near_zone[vid] <= 1e-6:
                    clean = False
            zeros30 += 0 if clean else 1
        out[mode] = s
        mean_decel = {v: (round(sum(d)/len(d),1) if d else None) for v, d in decel.items()}
        mean_stop = {v: (round(sum(d)/len(d),1) if d else None) for v, d in stops.items()}
        print(f"{mode.value:22s} overall={s.overall_mean:6.2f} per={ {v: round(m,2) for v,m in s.mean_passing.items()} } "
              f"first={s.first_pass_counts} decel={mean_decel} stop={mean_stop} "
              f"trials_with_zero_within30={zeros30} viol={sum(t.safety_violations for t in s.trials)} "
              f"fin={s.all_finished} wall={wall:.1f}s")
    sa = out[ScenarioMode.STAND_ALONE].overall_mean
    fp = out[ScenarioMode.FUTURE_PATH_ONLY].overall_mean
    rs = out[ScenarioMode.FUTURE_PATH_WITH_RSU].overall_mean
    print(f"ratios: fp/sa={fp/sa:.3f} (need >=0.95)   rsu/sa={rs/sa:.3f} (need <=0.85)")


if __name__ == "__main__":
    report()
