/**
 * Pure view-model layer: payload -> renderable structures. No DOM, no fetch,
 * so everything here runs under plain vitest.
 */

import type { ClassInfo, NextPayload } from './api.js';

export class FormatError extends Error {}

export interface CentroidCard {
  complete: boolean;
  clusterId: number | null;
  centroidText: string;
  countLabel: string;
  members: { text: string; countLabel: string }[];
  reviewed: number;
  total: number;
  progressLabel: string;
}

/** 1234567 -> "1,234,567" */
export function formatCount(value: number): string {
  if (!Number.isFinite(value)) {
    throw new FormatError(`not a finite count: ${value}`);
  }
  return value.toLocaleString('en-US');
}

/** Lossless mapping of the session/next payload onto the card the labeler sees. */
export function formatCentroidCard(payload: NextPayload): CentroidCard {
  if (typeof payload !== 'object' || payload === null || typeof payload.complete !== 'boolean') {
    throw new FormatError('malformed session payload');
  }
  const { reviewed, total } = payload.progress ?? { reviewed: NaN, total: NaN };
  if (!Number.isInteger(reviewed) || !Number.isInteger(total)) {
    throw new FormatError('malformed progress in session payload');
  }
  if (payload.complete) {
    return {
      complete: true,
      clusterId: null,
      centroidText: '',
      countLabel: '',
      members: [],
      reviewed,
      total,
      progressLabel: `${formatCount(reviewed)} / ${formatCount(total)}`,
    };
  }
  const cluster = payload.cluster;
  if (
    cluster === null ||
    typeof cluster.centroid_text !== 'string' ||
    !Number.isInteger(cluster.total_count) ||
    !Array.isArray(cluster.members)
  ) {
    throw new FormatError('malformed cluster in session payload');
  }
  return {
    complete: false,
    clusterId: cluster.id,
    centroidText: cluster.centroid_text,
    countLabel: formatCount(cluster.total_count),
    members: cluster.members.map((m) => ({ text: m.text, countLabel: formatCount(m.count) })),
    reviewed,
    total,
    progressLabel: `${formatCount(reviewed)} / ${formatCount(total)}`,
  };
}

/** Case-insensitive substring match over class name + exemplar. */
export function filterClasses(classes: ClassInfo[], query: string): ClassInfo[] {
  const needle = query.trim().toLowerCase();
  if (!needle) {
    return classes.slice();
  }
  return classes.filter(
    (c) =>
      c.name.toLowerCase().includes(needle) || c.exemplar.toLowerCase().includes(needle),
  );
}

/** Keep the palette highlight on a real row after the list changes. */
export function clampSelection(index: number, listLength: number): number {
  if (listLength <= 0) {
    return 0;
  }
  return Math.min(Math.max(index, 0), listLength - 1);
}
