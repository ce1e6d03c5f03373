import { parseArgs } from 'node:util';
import { writeFileSync } from 'fs';
import { readCsv } from './csv';
import { sweepChart } from './charts';

const USAGE = 'usage: node plot_sweep.js --in results.csv --axis M --out fig.svg';

function main(): number {
  const { values } = parseArgs({
    options: {
      in: { type: 'string' },
      axis: { type: 'string' },
      out: { type: 'string' },
    },
  });
  if (!values.in || !values.axis || !values.out) {
    console.error(USAGE);
    return 2;
  }
  writeFileSync(values.out, sweepChart(readCsv(values.in).rows, values.axis));
  console.log(`wrote ${values.out}`);
  return 0;
}

try {
  process.exitCode = main();
} catch (err) {
  console.error(err instanceof Error ? err.message : String(err));
  process.exitCode = 1;
}
