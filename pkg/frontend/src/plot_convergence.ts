import { parseArgs } from 'node:util';
import { writeFileSync } from 'fs';
import { basename } from 'path';
import { readCsv } from './csv';
import { convergenceChart } from './charts';

const USAGE =
  'usage: node plot_convergence.js --in trace.csv [--in more.csv] [--label name ...] --out fig.svg';

function main(): number {
  const { values } = parseArgs({
    options: {
      in: { type: 'string', multiple: true },
      label: { type: 'string', multiple: true },
      out: { type: 'string' },
    },
  });
  const inputs = values.in ?? [];
  const labels = values.label ?? [];
  if (inputs.length === 0 || !values.out) {
    console.error(USAGE);
    return 2;
  }
  if (labels.length > 0 && labels.length !== inputs.length) {
    console.error('need one --label per --in (or none at all)');
    return 2;
  }
  const tables = inputs.map((path, i) => ({
    label: labels[i] ?? basename(path).replace(/\.csv$/, ''),
    rows: readCsv(path).rows,
  }));
  writeFileSync(values.out, convergenceChart(tables));
  console.log(`wrote ${values.out}`);
  return 0;
}

try {
  process.exitCode = main();
} catch (err) {
  console.error(err instanceof Error ? err.message : String(err));
  process.exitCode = 1;
}
