import { describe, expect, it } from 'vitest';
import { num, parseCsv, str } from '../src/csv';

const SAMPLE = [
  '# units: ee bit/s/Hz/W, sum_rate bit/s/Hz, p_tot W, runtime_s seconds',
  'axis,value,scheme,seed,ee,status',
  'M,8,hybrid-joint,0,4.25,converged',
  'M,8,full-passive,0,,error:ValueError',
  'M,12,hybrid-joint,1,5.5,converged',
  '',
].join('\n');

describe('parseCsv', () => {
  it('separates comment lines from records', () => {
    const table = parseCsv(SAMPLE);
    expect(table.comments).toHaveLength(1);
    expect(table.comments[0]).toContain('units');
    expect(table.rows).toHaveLength(3);
  });

  it('types numeric fields and keeps empties as the missing sentinel', () => {
    const table = parseCsv(SAMPLE);
    expect(table.rows[0].ee).toBe(4.25);
    expect(table.rows[0].value).toBe(8);
    expect(table.rows[1].ee).toBe('');
    expect(str(table.rows[1], 'status')).toBe('error:ValueError');
  });

  it('num() turns missing cells into NaN, not zero', () => {
    const table = parseCsv(SAMPLE);
    expect(num(table.rows[1], 'ee')).toBeNaN();
    expect(num(table.rows[2], 'ee')).toBe(5.5);
  });

  it('handles comment lines that are not at the top', () => {
    const mixed = 'a,b\n1,2\n# midstream note\n3,4\n';
    const table = parseCsv(mixed);
    expect(table.rows).toHaveLength(2);
    expect(table.comments).toHaveLength(1);
  });
});
