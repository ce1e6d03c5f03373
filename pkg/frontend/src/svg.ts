/**
 * Minimal SVG scene helpers. Everything is plain string building from
 * numbers, so a re-render of the same data is byte-identical.
 */

/** Fixed-precision coordinate formatting; avoids 1e-17 noise in paths. */
export function fmt(x: number): string {
  if (!Number.isFinite(x)) throw new Error(`non-finite coordinate: ${x}`);
  const s = x.toFixed(2);
  return s === '-0.00' ? '0.00' : s;
}

/** Tick-label formatting: short, stable, no scientific noise for plot-scale values. */
export function fmtTick(x: number): string {
  if (x === 0) return '0';
  const a = Math.abs(x);
  if (a >= 1e4 || a < 1e-3) return x.toExponential(1);
  const s = x.toPrecision(4);
  return s.includes('.') ? s.replace(/\.?0+$/, '') : s;
}

export function escapeText(s: string): string {
  return s
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** Affine map from data coordinates to pixel coordinates. */
export class LinearScale {
  constructor(
    readonly d0: number,
    readonly d1: number,
    readonly r0: number,
    readonly r1: number,
  ) {
    if (!Number.isFinite(d0) || !Number.isFinite(d1)) {
      throw new Error('scale domain must be finite');
    }
  }

  at(x: number): number {
    const span = this.d1 - this.d0;
    const t = span === 0 ? 0.5 : (x - this.d0) / span;
    return this.r0 + t * (this.r1 - this.r0);
  }
}

/** Round tick steps on the 1-2-5 ladder, covering [min, max]. */
export function niceTicks(min: number, max: number, count = 6): number[] {
  if (min === max) {
    return [min];
  }
  const rawStep = (max - min) / Math.max(1, count - 1);
  let step = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const err = rawStep / step;
  if (err >= Math.sqrt(50)) step *= 10;
  else if (err >= Math.sqrt(10)) step *= 5;
  else if (err >= Math.sqrt(2)) step *= 2;
  const ticks: number[] = [];
  const start = Math.ceil(min / step - 1e-9) * step;
  for (let v = start; v <= max + step * 1e-9; v += step) {
    // snap away accumulated float error so labels stay clean
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : Number(v.toPrecision(12)));
  }
  return ticks;
}

/** Pad a [min, max] extent by a fraction on each side (degenerate-safe). */
export function padded(min: number, max: number, frac = 0.05): [number, number] {
  if (min === max) {
    const pad = min === 0 ? 1 : Math.abs(min) * frac * 2;
    return [min - pad, max + pad];
  }
  const pad = (max - min) * frac;
  return [min - pad, max + pad];
}

export function polyline(
  pts: Array<[number, number]>,
  attrs: string,
): string {
  const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
  return `<polyline points="${d}" ${attrs}/>`;
}

/** Closed band between an upper and a lower sequence of points. */
export function band(
  upper: Array<[number, number]>,
  lower: Array<[number, number]>,
  attrs: string,
): string {
  const ring = upper.concat(lower.slice().reverse());
  const d = ring.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
  return `<polygon points="${d}" ${attrs}/>`;
}

export function rect(
  x: number,
  y: number,
  w: number,
  h: number,
  attrs: string,
): string {
  return `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" ${attrs}/>`;
}

export function text(
  x: number,
  y: number,
  s: string,
  attrs = '',
): string {
  return `<text x="${fmt(x)}" y="${fmt(y)}" ${attrs}>${escapeText(s)}</text>`;
}

export interface Frame {
  width: number;
  height: number;
  left: number;
  right: number;
  top: number;
  bottom: number;
}

export const DEFAULT_FRAME: Frame = {
  width: 640,
  height: 420,
  left: 64,
  right: 16,
  top: 28,
  bottom: 52,
};

export const PALETTE = [
  '#1f77b4',
  '#d62728',
  '#2ca02c',
  '#9467bd',
  '#ff7f0e',
  '#8c564b',
];

const AXIS_STYLE = 'stroke="#333" stroke-width="1" fill="none"';
const TICK_TEXT = 'font-size="11" fill="#333"';
const LABEL_TEXT = 'font-size="12" fill="#111"';

export function axisBottom(
  scale: LinearScale,
  ticks: number[],
  frame: Frame,
  label: string,
): string {
  const y = frame.height - frame.bottom;
  const parts = [
    `<line x1="${fmt(frame.left)}" y1="${fmt(y)}" x2="${fmt(frame.width - frame.right)}" y2="${fmt(y)}" ${AXIS_STYLE}/>`,
  ];
  for (const t of ticks) {
    const x = scale.at(t);
    parts.push(`<line x1="${fmt(x)}" y1="${fmt(y)}" x2="${fmt(x)}" y2="${fmt(y + 5)}" ${AXIS_STYLE}/>`);
    parts.push(text(x, y + 18, fmtTick(t), `${TICK_TEXT} text-anchor="middle"`));
  }
  const cx = (frame.left + frame.width - frame.right) / 2;
  parts.push(text(cx, frame.height - 14, label, `${LABEL_TEXT} text-anchor="middle"`));
  return parts.join('\n');
}

export function axisLeft(
  scale: LinearScale,
  ticks: number[],
  frame: Frame,
  label: string,
): string {
  const x = frame.left;
  const parts = [
    `<line x1="${fmt(x)}" y1="${fmt(frame.top)}" x2="${fmt(x)}" y2="${fmt(frame.height - frame.bottom)}" ${AXIS_STYLE}/>`,
  ];
  for (const t of ticks) {
    const y = scale.at(t);
    parts.push(`<line x1="${fmt(x - 5)}" y1="${fmt(y)}" x2="${fmt(x)}" y2="${fmt(y)}" ${AXIS_STYLE}/>`);
    parts.push(text(x - 8, y + 4, fmtTick(t), `${TICK_TEXT} text-anchor="end"`));
  }
  const cy = (frame.top + frame.height - frame.bottom) / 2;
  parts.push(
    `<text x="16" y="${fmt(cy)}" ${LABEL_TEXT} text-anchor="middle" transform="rotate(-90 16 ${fmt(cy)})">${escapeText(label)}</text>`,
  );
  return parts.join('\n');
}

export interface LegendEntry {
  label: string;
  color: string;
}

export function legend(entries: LegendEntry[], frame: Frame): string {
  const parts: string[] = [];
  let y = frame.top + 12;
  const x = frame.width - frame.right - 150;
  for (const e of entries) {
    parts.push(`<line x1="${fmt(x)}" y1="${fmt(y - 4)}" x2="${fmt(x + 22)}" y2="${fmt(y - 4)}" stroke="${e.color}" stroke-width="2"/>`);
    parts.push(text(x + 28, y, e.label, TICK_TEXT));
    y += 16;
  }
  return parts.join('\n');
}

export function svgDocument(frame: Frame, title: string, body: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${frame.width}" height="${frame.height}" viewBox="0 0 ${frame.width} ${frame.height}" font-family="Helvetica, Arial, sans-serif">`,
    rect(0, 0, frame.width, frame.height, 'fill="#ffffff"'),
    text(frame.width / 2, 18, title, 'font-size="13" fill="#111" text-anchor="middle"'),
    body,
    '</svg>',
    '',
  ].join('\n');
}
