import { mkdirSync, writeFileSync } from 'fs';
import { join } from 'path';
import { readCsv } from './csv';
import { convergenceChart, modeCountChart, sweepChart } from './charts';

/**
 * Render every figure from the shipped sample CSVs into out/.
 * Regenerating after a new sweep: point the paths at your own run
 * directory or call the per-figure scripts directly.
 */

const DATA = join(__dirname, '..', 'data');
const OUT = process.argv[2] ?? join(__dirname, '..', 'out');

function render(name: string, svg: string): void {
  const path = join(OUT, name);
  writeFileSync(path, svg);
  console.log(`wrote ${path}`);
}

mkdirSync(OUT, { recursive: true });

render('convergence.svg', convergenceChart([
  { label: 'K = 3', rows: readCsv(join(DATA, 'sample_trace_k3.csv')).rows },
  { label: 'K = 6', rows: readCsv(join(DATA, 'sample_trace_k6.csv')).rows },
]));

render('ee_vs_m.svg',
  sweepChart(readCsv(join(DATA, 'sample_results_m.csv')).rows, 'M'));

render('ee_vs_rmin.svg',
  sweepChart(readCsv(join(DATA, 'sample_results_rmin.csv')).rows, 'R_min'));

render('ee_vs_budget.svg',
  sweepChart(readCsv(join(DATA, 'sample_results_budget.csv')).rows, 'P_r_max'));

render('mode_counts.svg',
  modeCountChart(readCsv(join(DATA, 'sample_results_budget.csv')).rows));
