// Progress panel model: constraint counter, log-posterior sparkline, and
// the triplet-distance series when the session tracks a target. Pure
// projection of the polled state; the panel never invents data points.

import { StatePayload } from "./api.js";

export interface Sparkline {
  /** One point per polled value, x left-to-right. */
  points: Array<{ x: number; y: number }>;
  min: number;
  max: number;
  path: string; // SVG path data
}

export interface ProgressModel {
  status: string;
  iteration: number;
  constraints: number;
  logPosterior: Sparkline;
  tripletDistance: Sparkline | null;
}

export function sparkline(
  series: readonly number[],
  width: number,
  height: number,
): Sparkline {
  if (series.length === 0) return { points: [], min: 0, max: 0, path: "" };
  const min = Math.min(...series);
  const max = Math.max(...series);
  const span = max - min || 1;
  const stepX = series.length > 1 ? width / (series.length - 1) : 0;
  const points = series.map((v, i) => ({
    x: i * stepX,
    y: height - ((v - min) / span) * height,
  }));
  const path = points
    .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)},${p.y.toFixed(2)}`)
    .join("");
  return { points, min, max, path };
}

export class ProgressTracker {
  private highWater = 0;

  /** Constraint counts can only grow; clamp display against stale polls. */
  model(state: StatePayload, width = 160, height = 40): ProgressModel {
    this.highWater = Math.max(this.highWater, state.constraints_count);
    return {
      status: state.status,
      iteration: state.iteration,
      constraints: this.highWater,
      logPosterior: sparkline(state.log_posterior, width, height),
      tripletDistance:
        state.triplet_distance === null
          ? null
          : sparkline(state.triplet_distance, width, height),
    };
  }
}
