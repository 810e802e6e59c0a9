import { describe, expect, it } from 'vitest';

import type { NextPayload } from '../src/api.js';
import {
  clampSelection,
  filterClasses,
  formatCentroidCard,
  formatCount,
  FormatError,
} from '../src/model.js';

function payload(overrides: Partial<NextPayload> = {}): NextPayload {
  return {
    complete: false,
    cursor: 3,
    progress: { reviewed: 3, total: 20 },
    classes: [],
    cluster: {
      id: 7,
      centroid_text: 'take care',
      total_count: 1234,
      members: [
        { text: 'take care', count: 1000 },
        { text: 'take care now', count: 200 },
        { text: 'do take care', count: 34 },
      ],
    },
    ...overrides,
  };
}

describe('formatCount', () => {
  it('adds thousands separators', () => {
    expect(formatCount(1234)).toBe('1,234');
    expect(formatCount(1234567)).toBe('1,234,567');
    expect(formatCount(7)).toBe('7');
  });

  it('rejects non-finite values', () => {
    expect(() => formatCount(Number.NaN)).toThrow(FormatError);
  });
});

describe('formatCentroidCard', () => {
  it('mirrors the payload losslessly', () => {
    const card = formatCentroidCard(payload());
    expect(card.complete).toBe(false);
    expect(card.clusterId).toBe(7);
    expect(card.centroidText).toBe('take care');
    expect(card.countLabel).toBe('1,234');
    expect(card.members).toHaveLength(3);
    expect(card.members[0]).toEqual({ text: 'take care', countLabel: '1,000' });
    expect(card.progressLabel).toBe('3 / 20');
  });

  it('renders a terminal card when the session is complete', () => {
    const card = formatCentroidCard(
      payload({ complete: true, cluster: null, progress: { reviewed: 20, total: 20 } }),
    );
    expect(card.complete).toBe(true);
    expect(card.clusterId).toBeNull();
    expect(card.progressLabel).toBe('20 / 20');
  });

  it('throws FormatError on malformed payloads', () => {
    expect(() => formatCentroidCard(payload({ cluster: null }))).toThrow(FormatError);
    expect(() =>
      formatCentroidCard(payload({ progress: undefined as unknown as NextPayload['progress'] })),
    ).toThrow(FormatError);
    expect(() => formatCentroidCard(null as unknown as NextPayload)).toThrow(FormatError);
  });
});

describe('filterClasses', () => {
  const classes = [
    { id: 0, name: 'Greet + Pain Scale Question', exemplar: 'Hello, rate your pain 1-10?' },
    { id: 1, name: 'Closing', exemplar: 'Take care!' },
    { id: 2, name: 'Rest Advice', exemplar: 'Please rest and hydrate.' },
  ];

  it('matches on name or exemplar, case-insensitively', () => {
    expect(filterClasses(classes, 'pain').map((c) => c.id)).toEqual([0]);
    expect(filterClasses(classes, 'TAKE').map((c) => c.id)).toEqual([1]);
    expect(filterClasses(classes, 'e').map((c) => c.id)).toEqual([0, 1, 2]);
  });

  it('returns everything for a blank query', () => {
    expect(filterClasses(classes, '  ')).toHaveLength(3);
  });

  it('returns an empty list when nothing matches', () => {
    expect(filterClasses(classes, 'zzz')).toEqual([]);
  });
});

describe('clampSelection', () => {
  it('stays within the visible list', () => {
    expect(clampSelection(5, 3)).toBe(2);
    expect(clampSelection(-2, 3)).toBe(0);
    expect(clampSelection(1, 0)).toBe(0);
  });
});
