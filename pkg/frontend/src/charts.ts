import { num, str } from './csv';
import {
  DEFAULT_FRAME,
  Frame,
  LegendEntry,
  LinearScale,
  PALETTE,
  axisBottom,
  axisLeft,
  band,
  legend,
  niceTicks,
  padded,
  polyline,
  rect,
  svgDocument,
  text,
} from './svg';

type Row = Record<string, string | number>;

const AXIS_LABELS: Record<string, string> = {
  M: 'surface elements M',
  R_min: 'rate floor R_min [bit/s/Hz]',
  P_r_max: 'amplification budget P_r_max [W]',
  M_act: 'active elements',
  scheme: 'scheme',
};

const EE_LABEL = 'energy efficiency [bit/s/Hz/W]';

// ---------------------------------------------------------------------------
// convergence (trace.csv)

export interface TracePoint {
  iter: number;
  xi: number;
}

export interface TraceSeries {
  label: string;
  points: TracePoint[];
}

/**
 * Reduce an optimizer trace to its ratio-update path: one xi per outer
 * iteration. An enumeration trace holds many candidate schedules; the one
 * that ends highest is the schedule the report keeps, so that is the curve
 * worth showing.
 */
export function convergenceSeries(rows: Row[], label: string): TraceSeries {
  const byCandidate = new Map<string, Map<number, number>>();
  for (const row of rows) {
    const xi = num(row, 'xi');
    const iter = num(row, 'outer_iter');
    if (!Number.isFinite(xi) || !Number.isFinite(iter)) continue;
    const cand = str(row, 'candidate');
    let path = byCandidate.get(cand);
    if (!path) {
      path = new Map<number, number>();
      byCandidate.set(cand, path);
    }
    // xi is constant within an outer iteration; last write wins harmlessly.
    path.set(iter, xi);
  }
  let best: TracePoint[] | null = null;
  for (const path of byCandidate.values()) {
    const pts = [...path.entries()]
      .map(([iter, xi]) => ({ iter, xi }))
      .sort((a, b) => a.iter - b.iter);
    if (pts.length === 0) continue;
    if (!best || pts[pts.length - 1].xi > best[best.length - 1].xi) {
      best = pts;
    }
  }
  if (!best) {
    throw new Error(`trace "${label}" has no usable iterations`);
  }
  return { label, points: best };
}

export function convergenceChart(
  tables: Array<{ label: string; rows: Row[] }>,
  frame: Frame = DEFAULT_FRAME,
): string {
  if (tables.length === 0) throw new Error('no traces given');
  const series = tables.map((t) => convergenceSeries(t.rows, t.label));

  const xs = series.flatMap((s) => s.points.map((p) => p.iter));
  const ys = series.flatMap((s) => s.points.map((p) => p.xi));
  const [y0, y1] = padded(Math.min(...ys), Math.max(...ys));
  const sx = new LinearScale(Math.min(...xs), Math.max(...xs, 1), frame.left, frame.width - frame.right);
  const sy = new LinearScale(y0, y1, frame.height - frame.bottom, frame.top);

  const parts: string[] = [];
  const entries: LegendEntry[] = [];
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = s.points.map((p): [number, number] => [sx.at(p.iter), sy.at(p.xi)]);
    parts.push(polyline(pts, `fill="none" stroke="${color}" stroke-width="2"`));
    for (const [px, py] of pts) {
      parts.push(`<circle cx="${px.toFixed(2)}" cy="${py.toFixed(2)}" r="2.5" fill="${color}"/>`);
    }
    entries.push({ label: s.label, color });
  });
  const xTickSource = niceTicks(sx.d0, sx.d1, 7);
  const xTicks = xTickSource.filter((t) => Number.isInteger(t));
  parts.push(axisBottom(sx, xTicks.length >= 2 ? xTicks : xTickSource, frame, 'outer iteration'));
  parts.push(axisLeft(sy, niceTicks(y0, y1), frame, EE_LABEL));
  parts.push(legend(entries, frame));
  return svgDocument(frame, 'ratio-iteration convergence', parts.join('\n'));
}

// ---------------------------------------------------------------------------
// sweep (results.csv)

export interface SweepPoint {
  value: number;
  mean: number;
  std: number;
  n: number;
}

/** Per-scheme mean/std of efficiency along the sweep axis, failed rows skipped. */
export function sweepSeries(rows: Row[], axis: string): Map<string, SweepPoint[]> {
  const cells = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    if (str(row, 'axis') !== axis) continue;
    const ee = num(row, 'ee');
    const value = num(row, 'value');
    if (!Number.isFinite(ee) || !Number.isFinite(value)) continue;
    const scheme = str(row, 'scheme');
    let byValue = cells.get(scheme);
    if (!byValue) {
      byValue = new Map<number, number[]>();
      cells.set(scheme, byValue);
    }
    const bucket = byValue.get(value);
    if (bucket) {
      bucket.push(ee);
    } else {
      byValue.set(value, [ee]);
    }
  }
  const out = new Map<string, SweepPoint[]>();
  for (const [scheme, byValue] of cells) {
    const pts = [...byValue.entries()]
      .map(([value, ees]) => {
        const mean = ees.reduce((a, b) => a + b, 0) / ees.length;
        const varSum = ees.reduce((a, b) => a + (b - mean) ** 2, 0);
        return { value, mean, std: Math.sqrt(varSum / ees.length), n: ees.length };
      })
      .sort((a, b) => a.value - b.value);
    out.set(scheme, pts);
  }
  if (out.size === 0) {
    throw new Error(`no usable rows for axis "${axis}"`);
  }
  return out;
}

export function sweepChart(
  rows: Row[],
  axis: string,
  frame: Frame = DEFAULT_FRAME,
): string {
  const series = sweepSeries(rows, axis);

  const xs: number[] = [];
  const ys: number[] = [];
  for (const pts of series.values()) {
    for (const p of pts) {
      xs.push(p.value);
      ys.push(p.mean - p.std, p.mean + p.std);
    }
  }
  const [y0, y1] = padded(Math.min(...ys), Math.max(...ys));
  const sx = new LinearScale(Math.min(...xs), Math.max(...xs), frame.left, frame.width - frame.right);
  const sy = new LinearScale(y0, y1, frame.height - frame.bottom, frame.top);

  const parts: string[] = [];
  const entries: LegendEntry[] = [];
  let i = 0;
  for (const [scheme, pts] of series) {
    const color = PALETTE[i % PALETTE.length];
    i += 1;
    const upper = pts.map((p): [number, number] => [sx.at(p.value), sy.at(p.mean + p.std)]);
    const lower = pts.map((p): [number, number] => [sx.at(p.value), sy.at(p.mean - p.std)]);
    const mid = pts.map((p): [number, number] => [sx.at(p.value), sy.at(p.mean)]);
    if (pts.length > 1) {
      parts.push(band(upper, lower, `fill="${color}" fill-opacity="0.15" stroke="none"`));
    }
    parts.push(polyline(mid, `fill="none" stroke="${color}" stroke-width="2"`));
    for (const [px, py] of mid) {
      parts.push(`<circle cx="${px.toFixed(2)}" cy="${py.toFixed(2)}" r="2.5" fill="${color}"/>`);
    }
    entries.push({ label: scheme, color });
  }
  parts.push(axisBottom(sx, niceTicks(sx.d0, sx.d1), frame, AXIS_LABELS[axis] ?? axis));
  parts.push(axisLeft(sy, niceTicks(y0, y1), frame, EE_LABEL));
  parts.push(legend(entries, frame));
  return svgDocument(frame, `mean efficiency vs ${axis} (bands: +-1 std)`, parts.join('\n'));
}

// ---------------------------------------------------------------------------
// mode counts (results.csv, amplification-budget axis)

export interface CountBar {
  value: number;
  active: number;
  passive: number;
  m: number;
}

/**
 * Mean active/passive element split per budget value for one scheme.
 * Means are taken over seeds; active + passive equals M by construction
 * because passive is defined as the remainder.
 */
export function modeCountData(rows: Row[], scheme?: string): CountBar[] {
  const schemes = new Set(rows.map((r) => str(r, 'scheme')));
  const picked =
    scheme ?? [...schemes].find((s) => s.startsWith('hybrid')) ?? [...schemes][0];
  const byValue = new Map<number, { acts: number[]; m: number }>();
  for (const row of rows) {
    if (str(row, 'axis') !== 'P_r_max') continue;
    if (str(row, 'scheme') !== picked) continue;
    const mAct = num(row, 'm_act');
    const value = num(row, 'value');
    const m = num(row, 'm');
    if (!Number.isFinite(mAct) || !Number.isFinite(value) || !Number.isFinite(m)) continue;
    const cell = byValue.get(value);
    if (cell) {
      if (cell.m !== m) throw new Error(`mixed array sizes at P_r_max=${value}`);
      cell.acts.push(mAct);
    } else {
      byValue.set(value, { acts: [mAct], m });
    }
  }
  const bars = [...byValue.entries()]
    .map(([value, cell]) => {
      const active = cell.acts.reduce((a, b) => a + b, 0) / cell.acts.length;
      return { value, active, passive: cell.m - active, m: cell.m };
    })
    .sort((a, b) => a.value - b.value);
  if (bars.length === 0) {
    throw new Error(`no mode-count rows for scheme "${picked}"`);
  }
  return bars;
}

export function modeCountChart(
  rows: Row[],
  scheme?: string,
  frame: Frame = DEFAULT_FRAME,
): string {
  const bars = modeCountData(rows, scheme);
  const m = bars[0].m;

  const plotW = frame.width - frame.left - frame.right;
  const slot = plotW / bars.length;
  const barW = slot * 0.55;
  const sy = new LinearScale(0, m, frame.height - frame.bottom, frame.top);

  const parts: string[] = [];
  bars.forEach((bar, i) => {
    const x = frame.left + slot * (i + 0.5) - barW / 2;
    const yActiveTop = sy.at(bar.active);
    const yBase = sy.at(0);
    // active at the bottom of the stack, passive filling up to M
    parts.push(rect(x, yActiveTop, barW, yBase - yActiveTop, `fill="${PALETTE[1]}"`));
    parts.push(rect(x, sy.at(m), barW, yActiveTop - sy.at(m), `fill="${PALETTE[0]}" fill-opacity="0.55"`));
    parts.push(text(x + barW / 2, frame.height - frame.bottom + 18, fmtValue(bar.value), 'font-size="11" fill="#333" text-anchor="middle"'));
    parts.push(text(x + barW / 2, yActiveTop + 14, bar.active.toFixed(1), 'font-size="10" fill="#fff" text-anchor="middle"'));
  });
  const yTickSource = niceTicks(0, m, 6).filter((t) => Number.isInteger(t));
  parts.push(axisLeft(sy, yTickSource, frame, 'element count'));
  const cx = (frame.left + frame.width - frame.right) / 2;
  parts.push(text(cx, frame.height - 14, AXIS_LABELS.P_r_max, 'font-size="12" fill="#111" text-anchor="middle"'));
  parts.push(legend([
    { label: 'active (mean)', color: PALETTE[1] },
    { label: 'passive (mean)', color: PALETTE[0] },
  ], frame));
  return svgDocument(frame, `element modes vs amplification budget (M = ${m})`, parts.join('\n'));
}

function fmtValue(v: number): string {
  return Number.isInteger(v) ? String(v) : String(Number(v.toPrecision(4)));
}
