/**
 * HTML-string renderers. Pure functions of the controller state, which is
 * what makes "a full refresh renders the identical session" testable: two
 * controllers with the same server view render byte-identical markup.
 */

import type { ClassInfo } from './api.js';
import type { CentroidCard } from './model.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

export function renderCard(card: CentroidCard, expanded: boolean): string {
  if (card.complete) {
    return [
      '<section class="card card-complete">',
      '<h2>Session complete</h2>',
      `<p>${escapeHtml(card.progressLabel)} clusters reviewed. Export the catalog when ready.</p>`,
      '<p><a href="/api/classes/export" download="catalog.json">Download catalog</a></p>',
      '</section>',
    ].join('');
  }
  const members = card.members
    .map((m) => `<li><span class="member-text">${escapeHtml(m.text)}</span>` +
      `<span class="member-count">${escapeHtml(m.countLabel)}</span></li>`)
    .join('');
  return [
    '<section class="card">',
    `<div class="progress">${escapeHtml(card.progressLabel)}</div>`,
    `<blockquote class="centroid">${escapeHtml(card.centroidText)}</blockquote>`,
    `<div class="count">${escapeHtml(card.countLabel)} occurrences</div>`,
    `<details class="members"${expanded ? ' open' : ''}>`,
    `<summary>${card.members.length} member variant${card.members.length === 1 ? '' : 's'}</summary>`,
    `<ul>${members}</ul>`,
    '</details>',
    '</section>',
  ].join('');
}

export function renderPalette(
  classes: ClassInfo[],
  visible: ClassInfo[],
  selectedIndex: number,
  query: string,
): string {
  const rows = visible
    .map((c, i) => {
      const classAttr = i === selectedIndex ? ' class="selected"' : '';
      return (
        `<li${classAttr} data-class-id="${c.id}">` +
        `<span class="class-name">${escapeHtml(c.name)}</span>` +
        `<span class="class-exemplar">${escapeHtml(c.exemplar)}</span></li>`
      );
    })
    .join('');
  return [
    '<section class="palette">',
    `<h3>Existing classes (${classes.length})</h3>`,
    `<input id="palette-search" type="search" placeholder="/ to search, Enter to assign" value="${escapeHtml(query)}">`,
    `<ul id="palette-list">${rows || '<li class="empty">no matching classes</li>'}</ul>`,
    '</section>',
  ].join('');
}

export function renderCreateForm(name: string, exemplar: string): string {
  return [
    '<section class="create">',
    '<h3>Create new class</h3>',
    `<input id="create-name" type="text" placeholder="memorable name, e.g. Greet + Pain Scale Question" value="${escapeHtml(name)}">`,
    `<input id="create-exemplar" type="text" placeholder="exemplar message (defaults to centroid's most frequent raw form)" value="${escapeHtml(exemplar)}">`,
    '<button id="create-submit">Create &amp; assign (Ctrl+Enter)</button>',
    '</section>',
  ].join('');
}

export function renderControls(busy: boolean): string {
  const disabled = busy ? ' disabled' : '';
  return [
    '<section class="controls">',
    `<button id="action-skip"${disabled}>Skip (s)</button>`,
    `<button id="action-undo"${disabled}>Undo (u)</button>`,
    '</section>',
  ].join('');
}

export function renderBanner(error: string | null, retryable: boolean): string {
  if (!error) {
    return '';
  }
  const retry = retryable ? ' <button id="action-retry">Retry</button>' : '';
  return `<div class="banner error">${escapeHtml(error)}${retry}</div>`;
}
